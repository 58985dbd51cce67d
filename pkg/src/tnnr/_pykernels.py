"""Pure numpy versions of the compiled kernels (same signatures)."""
import numpy as np

BACKEND = "python"


def dense_forward(X, W, b, out, relu):
    """out = X @ W.T + b, optionally rectified in place."""
    if W.shape[1] != X.shape[1] or out.shape != (X.shape[0], W.shape[0]):
        raise ValueError("dense_forward: shape mismatch")
    np.matmul(X, W.T, out=out)
    out += b
    if relu:
        np.maximum(out, 0.0, out=out)


def dense_backward(d_out, X, W, g_w, g_b, d_in, mask_by_input):
    if d_out.shape != (X.shape[0], W.shape[0]):
        raise ValueError("dense_backward: shape mismatch")
    np.matmul(d_out.T, X, out=g_w)
    np.sum(d_out, axis=0, out=g_b)
    if d_in is None:
        return
    np.matmul(d_out, W, out=d_in)
    if mask_by_input:
        d_in[X <= 0.0] = 0.0


def adadelta_update(params, grads, acc_grad, acc_delta, rho, eps, lr):
    finite = np.isfinite(grads)
    if not finite.all():
        return int(np.argmin(finite))
    acc_grad *= rho
    acc_grad += (1.0 - rho) * grads * grads
    delta = np.sqrt(acc_delta + eps)
    delta /= np.sqrt(acc_grad + eps)
    delta *= grads
    np.negative(delta, out=delta)
    acc_delta *= rho
    acc_delta += (1.0 - rho) * delta * delta
    params += lr * delta
    return -1


def gather_pairs(X, left, right, out):
    if out.shape != (left.shape[0], 2 * X.shape[1]) or right.shape != left.shape:
        raise ValueError("gather_pairs: shape mismatch")
    d = X.shape[1]
    out[:, :d] = X[left]
    out[:, d:] = X[right]
