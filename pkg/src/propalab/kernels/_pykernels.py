"""Pure numpy versions of the compiled kernels.

Semantics match ``_ckernels`` exactly; the loops run over ball offsets
instead of cells, so each step is a vectorized roll over the batch.
"""

import numpy as np


def _roll(v, shift):
    axes = tuple(range(1, v.ndim))
    return np.roll(v, shift=tuple(int(s) for s in shift), axis=axes)


def ball_sum_1d(v, offs):
    out = np.zeros_like(v)
    for o in offs:
        out += _roll(v, -o)
    return out


ball_sum_2d = ball_sum_1d


def ball_max_1d(v, offs):
    out = np.full_like(v, -np.inf)
    for o in offs:
        np.maximum(out, _roll(v, o), out=out)
    return out


ball_max_2d = ball_max_1d


def divform_1d(u, a, h):
    q = a * (np.roll(u, -1, axis=1) - u)
    return -(q - np.roll(q, 1, axis=1)) / (h * h)


def divform_2d(u, a, h):
    g0 = np.roll(u, -1, axis=1) - u
    g1 = np.roll(u, -1, axis=2) - u
    q0 = a[..., 0, 0] * g0 + a[..., 0, 1] * g1
    q1 = a[..., 1, 0] * g0 + a[..., 1, 1] * g1
    div = (q0 - np.roll(q0, 1, axis=1)) + (q1 - np.roll(q1, 1, axis=2))
    return -div / (h * h)
