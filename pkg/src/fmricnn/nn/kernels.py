"""Kernel dispatch: compiled extension when importable, numpy otherwise.

Set ``FMRICNN_PURE_PYTHON=1`` to force the numpy path.
"""
import os

import numpy as np

from . import _kernels_py

PYTHON = "python"
CYTHON = "cython"

_ck = None
if not os.environ.get("FMRICNN_PURE_PYTHON"):
    try:
        from . import _ckernels as _ck
    except ImportError:
        _ck = None

BACKEND = CYTHON if _ck is not None else PYTHON
_impl = _ck if _ck is not None else _kernels_py


def available_backends():
    return [PYTHON] + ([CYTHON] if _ck is not None else [])


def use_backend(name):
    """Switch the active backend at runtime (benchmarks and tests)."""
    global BACKEND, _impl
    if name == CYTHON and _ck is None:
        raise ImportError("compiled kernels are not built")
    _impl = _ck if name == CYTHON else _kernels_py
    BACKEND = name


def im2col(x, k):
    return _impl.im2col(np.ascontiguousarray(x, dtype=np.float64), k)


def col2im(cols, shape, k):
    return _impl.col2im(np.ascontiguousarray(cols, dtype=np.float64), tuple(shape), k)


def maxpool_forward(x, p):
    return _impl.maxpool_forward(np.ascontiguousarray(x, dtype=np.float64), p)


def maxpool_backward(grad, arg, shape, p):
    return _impl.maxpool_backward(np.ascontiguousarray(grad, dtype=np.float64),
                                  np.ascontiguousarray(arg, dtype=np.uint8), tuple(shape), p)
