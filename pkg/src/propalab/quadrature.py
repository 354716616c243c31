"""Time quadrature helpers shared by the evolution, norm and check modules."""

import numpy as np


def graded_gauss(fun, a, b, stiffness, tol=1e-12, orders=(16, 32, 64, 128)):
    """Integrate ``fun`` over [a, b] on panels graded geometrically toward ``a``.

    ``fun`` takes an array of times and returns one value (or one row of
    values) per time. The integrand is assumed smooth but possibly decaying
    on the fast scale ``1 / stiffness`` right after ``a`` (a semigroup started at ``a``).
    Gauss-Legendre orders are raised until two successive estimates agree
    to relative accuracy ``tol``.
    Returns ``(value, error_estimate)``.
    """
    length = b - a
    if length <= 0:
        return 0.0, 0.0
    first = min(length, 0.05 / max(stiffness, 1e-300))
    edges = [a]
    width = first
    while edges[-1] + width < b - 1e-15 * length:
        edges.append(edges[-1] + width)
        width = edges[-1] - a
    edges.append(b)
    edges = np.asarray(edges)
    lo, hi = edges[:-1], edges[1:]

    previous = None
    for order in orders:
        x, w = np.polynomial.legendre.leggauss(order)
        nodes = (0.5 * (hi - lo)[:, None] * (x[None, :] + 1.0) + lo[:, None]).ravel()
        weights = (0.5 * (hi - lo)[:, None] * w[None, :]).ravel()
        vals = np.asarray(fun(nodes))
        est = np.tensordot(weights, vals, axes=1)
        if previous is not None:
            err = np.abs(est - previous)
            scale = np.maximum(np.abs(est), 1e-300)
            if np.all(err <= tol * scale):
                return est, err
        previous = est
    return est, err


def interpolate_slices(times, values, s):
    """Piecewise-linear interpolation in time, constant beyond the sample range."""
    times = np.asarray(times)
    if s <= times[0]:
        return values[0]
    if s >= times[-1]:
        return values[-1]
    i = int(np.searchsorted(times, s, side="right")) - 1
    w = (s - times[i]) / (times[i + 1] - times[i])
    return (1.0 - w) * values[i] + w * values[i + 1]


def slice_integral(times, values, a, b):
    """Integral over [a, b] of the piecewise-linear interpolant of sampled slices.

    ``values`` has the time axis first; the result has the remaining shape.
    """
    if b <= a:
        return np.zeros_like(values[0], dtype=float)
    times = np.asarray(times)
    inside = times[(times > a) & (times < b)]
    nodes = np.concatenate([[a], inside, [b]])
    samples = np.stack([interpolate_slices(times, values, s) for s in nodes])
    dt = np.diff(nodes)
    shape = (-1,) + (1,) * (samples.ndim - 1)
    return np.sum(0.5 * dt.reshape(shape) * (samples[1:] + samples[:-1]), axis=0)
