"""Hot loops with a compiled backend and a numpy fallback.

The compiled extension is picked at import when it was built; otherwise the
numpy implementations are used. :func:`use_backend` switches explicitly,
which the tests and the benchmark rely on.

The public functions accept arrays with any number of leading batch axes
followed by the ``dim`` spatial axes of the grid.
"""

import numpy as np

from . import _pykernels

try:
    from . import _ckernels
except ImportError:  # extension not built
    _ckernels = None

_BACKENDS = {"python": _pykernels}
if _ckernels is not None:
    _BACKENDS["cython"] = _ckernels

BACKEND = "cython" if _ckernels is not None else "python"


def available_backends():
    return sorted(_BACKENDS)


def use_backend(name):
    """Select the kernel backend by name; returns the previous one."""
    global BACKEND
    if name not in _BACKENDS:
        raise ValueError(f"backend {name!r} not available (have {available_backends()})")
    previous, BACKEND = BACKEND, name
    return previous


def _impl():
    return _BACKENDS[BACKEND]


def _batched(values, dim, dtype):
    values = np.asarray(values, dtype=dtype)
    lead = values.shape[: values.ndim - dim]
    flat = np.ascontiguousarray(values.reshape((-1,) + values.shape[values.ndim - dim :]))
    return flat, lead


def ball_sum(values, offsets):
    """``out[c] = sum_o values[c + o]`` with periodic wrap, per batch entry."""
    offsets = np.ascontiguousarray(offsets, dtype=np.int_)
    dim = offsets.shape[1]
    flat, lead = _batched(values, dim, np.float64)
    fn = _impl().ball_sum_1d if dim == 1 else _impl().ball_sum_2d
    out = fn(flat, offsets)
    return np.asarray(out).reshape(lead + flat.shape[1:])


def ball_max(values, offsets):
    """``out[y] = max_o values[y - o]``: the max over all balls containing ``y``."""
    offsets = np.ascontiguousarray(offsets, dtype=np.int_)
    dim = offsets.shape[1]
    flat, lead = _batched(values, dim, np.float64)
    fn = _impl().ball_max_1d if dim == 1 else _impl().ball_max_2d
    out = fn(flat, offsets)
    return np.asarray(out).reshape(lead + flat.shape[1:])


def divergence_form(u, coeff, spacing):
    """Apply ``-div(A grad u)`` with forward-difference gradient.

    ``coeff`` has shape ``spatial + (dim, dim)``; in 1D the trailing
    ``(1, 1)`` block is accepted and squeezed.
    """
    coeff = np.asarray(coeff, dtype=np.complex128)
    dim = coeff.ndim - 2
    flat, lead = _batched(u, dim, np.complex128)
    if dim == 1:
        a = np.ascontiguousarray(coeff[:, 0, 0])
        out = _impl().divform_1d(flat, a, float(spacing))
    else:
        out = _impl().divform_2d(flat, np.ascontiguousarray(coeff), float(spacing))
    return np.asarray(out).reshape(lead + flat.shape[1:])
