"""Independent brute-force references used by the tests."""
import math

import numpy as np


def conv_direct(x, w, b):
    """Quadruple-loop valid cross-correlation."""
    n, c, h, wd = x.shape
    o, _, k, _ = w.shape
    out = np.zeros((n, o, h - k + 1, wd - k + 1))
    for s in range(n):
        for f in range(o):
            for i in range(h - k + 1):
                for j in range(wd - k + 1):
                    acc = 0.0
                    for ch in range(c):
                        for a in range(k):
                            for bb in range(k):
                                acc += w[f, ch, a, bb] * x[s, ch, i + a, j + bb]
                    out[s, f, i, j] = acc + b[f]
    return out


def window_max(x, p=2):
    n, c, h, w = x.shape
    out = np.empty((n, c, h // p, w // p))
    for s in range(n):
        for ch in range(c):
            for i in range(h // p):
                for j in range(w // p):
                    out[s, ch, i, j] = max(x[s, ch, i * p + a, j * p + b] for a in range(p) for b in range(p))
    return out


def numeric_grad(f, arr, h=1e-5):
    """Central differences of scalar f() w.r.t. every entry of arr (in place)."""
    g = np.zeros_like(arr)
    flat, gflat = arr.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        fp = f()
        flat[i] = orig - h
        fm = f()
        flat[i] = orig
        gflat[i] = (fp - fm) / (2 * h)
    return g


def xent_direct(logits, labels):
    total = 0.0
    for row, y in zip(logits, labels):
        m = max(row)
        lse = m + math.log(sum(math.exp(v - m) for v in row))
        total += lse - row[y]
    return total / len(labels)
