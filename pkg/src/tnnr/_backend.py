"""Kernel selection.

The compiled extension is used when it imports; ``TNNR_BACKEND=python``
forces the numpy fallback (``cython`` makes a missing extension an error).
"""
import os

from . import _pykernels

_requested = os.environ.get("TNNR_BACKEND", "auto").lower()

if _requested == "python":
    kernels = _pykernels
else:
    try:
        from . import _ckernels as kernels
    except ImportError:
        if _requested == "cython":
            raise
        kernels = _pykernels

BACKEND = kernels.BACKEND


def get_kernels(name=None):
    """Return a kernel module by name (``"cython"``/``"python"``), or the active one."""
    if name is None:
        return kernels
    if name == "python":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown backend {name!r}")


class use_backend:
    """Context manager that swaps the active kernels, mostly for tests and benchmarks."""

    def __init__(self, name):
        self._new = get_kernels(name)

    def __enter__(self):
        global kernels
        self._old, kernels = kernels, self._new
        return self._new

    def __exit__(self, *exc):
        global kernels
        kernels = self._old
        return False
