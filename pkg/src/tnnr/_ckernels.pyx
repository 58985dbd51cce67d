# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled dense-layer and Adadelta kernels.

Every routine writes into caller-owned buffers. Arrays are C-contiguous
float64; row-major matrices are handed to column-major BLAS as their
transposes.
"""
from libc.math cimport sqrt
from scipy.linalg.cython_blas cimport dgemm

BACKEND = "cython"


def dense_forward(const double[:, ::1] X, const double[:, ::1] W,
                  const double[::1] b, double[:, ::1] out, bint relu):
    """out = X @ W.T + b, optionally rectified in place."""
    cdef int n = X.shape[0], fan_in = X.shape[1], fan_out = W.shape[0]
    cdef int r, c
    cdef double v
    cdef char transa = b'T', transb = b'N'
    cdef double one = 1.0
    if W.shape[1] != fan_in or out.shape[0] != n or out.shape[1] != fan_out:
        raise ValueError("dense_forward: shape mismatch")
    if n == 0:
        return
    for r in range(n):
        for c in range(fan_out):
            out[r, c] = b[c]
    dgemm(&transa, &transb, &fan_out, &n, &fan_in, &one,
          <double*>&W[0, 0], &fan_in, <double*>&X[0, 0], &fan_in,
          &one, &out[0, 0], &fan_out)
    if relu:
        for r in range(n):
            for c in range(fan_out):
                v = out[r, c]
                if v < 0.0:
                    out[r, c] = 0.0


def dense_backward(const double[:, ::1] d_out, const double[:, ::1] X,
                   const double[:, ::1] W, double[:, ::1] g_w, double[::1] g_b,
                   double[:, ::1] d_in, bint mask_by_input):
    """Weight/bias gradients of one layer and, if ``d_in`` is given, the
    gradient wrt its input. With ``mask_by_input`` the input gradient is
    zeroed wherever ``X`` (a post-ReLU activation) is not positive."""
    cdef int n = X.shape[0], fan_in = X.shape[1], fan_out = W.shape[0]
    cdef int r, c
    cdef char tn = b'N', tt = b'T'
    cdef double one = 1.0, zero = 0.0
    if d_out.shape[0] != n or d_out.shape[1] != fan_out:
        raise ValueError("dense_backward: shape mismatch")
    for c in range(fan_out):
        g_b[c] = 0.0
    if n == 0:
        g_w[:, :] = 0.0
        if d_in is not None:
            d_in[:, :] = 0.0
        return
    for r in range(n):
        for c in range(fan_out):
            g_b[c] += d_out[r, c]
    # g_w (fan_out x fan_in) = d_out.T @ X
    dgemm(&tn, &tt, &fan_in, &fan_out, &n, &one,
          <double*>&X[0, 0], &fan_in, <double*>&d_out[0, 0], &fan_out,
          &zero, &g_w[0, 0], &fan_in)
    if d_in is None:
        return
    # d_in (n x fan_in) = d_out @ W
    dgemm(&tn, &tn, &fan_in, &n, &fan_out, &one,
          <double*>&W[0, 0], &fan_in, <double*>&d_out[0, 0], &fan_out,
          &zero, &d_in[0, 0], &fan_in)
    if mask_by_input:
        for r in range(n):
            for c in range(fan_in):
                if X[r, c] <= 0.0:
                    d_in[r, c] = 0.0


def adadelta_update(double[::1] params, const double[::1] grads,
                    double[::1] acc_grad, double[::1] acc_delta,
                    double rho, double eps, double lr):
    """One fused Adadelta step over a flat parameter vector.

    Returns the index of the first non-finite gradient, or -1.
    """
    cdef Py_ssize_t i, n = params.shape[0]
    cdef double g, eg, delta
    cdef double keep = 1.0 - rho
    for i in range(n):
        g = grads[i]
        if not (g - g == 0.0):
            return i
    for i in range(n):
        g = grads[i]
        eg = rho * acc_grad[i] + keep * g * g
        acc_grad[i] = eg
        delta = -sqrt(acc_delta[i] + eps) / sqrt(eg + eps) * g
        acc_delta[i] = rho * acc_delta[i] + keep * delta * delta
        params[i] += lr * delta
    return -1


def gather_pairs(const double[:, ::1] X, const long[::1] left,
                 const long[::1] right, double[:, ::1] out):
    """out[p] = [X[left[p]] || X[right[p]]]."""
    cdef Py_ssize_t p, c, a, b, d = X.shape[1], n = left.shape[0]
    if right.shape[0] != n or out.shape[0] != n or out.shape[1] != 2 * d:
        raise ValueError("gather_pairs: shape mismatch")
    for p in range(n):
        a = left[p]
        b = right[p]
        for c in range(d):
            out[p, c] = X[a, c]
            out[p, d + c] = X[b, c]
