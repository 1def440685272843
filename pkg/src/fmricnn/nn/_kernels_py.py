"""Pure-numpy reference kernels.

Column layout shared with the compiled kernels: rows are (n, i, j) output
positions, columns are (c, a, b) filter taps. col2im accumulates taps in
(a, b) order so both backends sum every element identically.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def im2col(x, k):
    n, c, h, w = x.shape
    ho, wo = h - k + 1, w - k + 1
    win = sliding_window_view(x, (k, k), axis=(2, 3))  # (n, c, ho, wo, k, k)
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * k * k)


def col2im(cols, shape, k):
    n, c, h, w = shape
    ho, wo = h - k + 1, w - k + 1
    d = cols.reshape(n, ho, wo, c, k, k).transpose(0, 3, 4, 5, 1, 2)
    out = np.zeros(shape)
    for a in range(k):
        for b in range(k):
            out[:, :, a : a + ho, b : b + wo] += d[:, :, a, b]
    return out


def _windows(x, p):
    n, c, h, w = x.shape
    return x.reshape(n, c, h // p, p, w // p, p).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // p, w // p, p * p)


def maxpool_forward(x, p):
    win = _windows(x, p)
    arg = win.argmax(axis=-1).astype(np.uint8)
    out = np.take_along_axis(win, arg[..., None].astype(np.intp), axis=-1)[..., 0]
    return out, arg


def maxpool_backward(grad, arg, shape, p):
    n, c, h, w = shape
    g = np.zeros((n, c, h // p, w // p, p * p))
    np.put_along_axis(g, arg[..., None].astype(np.intp), grad[..., None], axis=-1)
    return g.reshape(n, c, h // p, w // p, p, p).transpose(0, 1, 2, 4, 3, 5).reshape(shape)
