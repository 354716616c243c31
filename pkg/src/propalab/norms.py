"""Norms of sampled space-time fields: Lebesgue/Bochner, tent, Kenig-Pipher, slice, Carleson.

Ball averages count cells exactly (no continuum volume constants), which makes
the Fubini identities ``T^{2,2} = L^2(L^2)`` and ``E^2_delta = L^2`` exact on
the torus: every cell lies in the same number of balls of a given radius.

Time integrals use the piecewise-linear interpolant of the per-slice ball
averages, restricted to the truncation window ``[t_min, T]``.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import simpson

from . import kernels
from .grid import Grid, ball_offsets
from .quadrature import slice_integral


@dataclass(eq=False)
class SpaceTimeField:
    """Samples u(t_i, .) with optional gradient samples.

    ``slices`` has shape ``(len(times),) + shape``, where ``shape`` is
    ``grid.shape`` for scalar fields or ``(dim,) + grid.shape`` for vector
    fields. ``gradients`` (optional) has shape ``(len(times), dim) + grid.shape``.
    """

    grid: Grid
    times: np.ndarray
    slices: np.ndarray
    gradients: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.slices = np.asarray(self.slices)
        if self.times.ndim != 1 or np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if self.times[0] < 0:
            raise ValueError("times must be nonnegative")
        if len(self.slices) != len(self.times):
            raise ValueError("one slice per time required")
        if self.slices.shape[1:] not in (self.grid.shape, (self.grid.dim,) + self.grid.shape):
            raise ValueError(f"slice shape {self.slices.shape[1:]} does not match {self.grid}")
        if self.gradients is not None:
            self.gradients = np.asarray(self.gradients)
            if self.gradients.shape != (len(self.times), self.grid.dim) + self.grid.shape:
                raise ValueError("gradient slices must have arity dim")
        if not np.all(np.isfinite(self.slices)):
            raise ValueError("slices must be finite")

    @property
    def is_vector(self):
        return self.slices.shape[1:] != self.grid.shape

    def squared_magnitude(self):
        """|F(t, x)|^2 summed over components, shape ``(nt,) + grid.shape``."""
        sq = np.abs(self.slices) ** 2
        return sq.sum(axis=1) if self.is_vector else sq

    def scaled(self, c):
        grads = None if self.gradients is None else c * self.gradients
        return SpaceTimeField(self.grid, self.times, c * self.slices, grads)

    def gradient_field(self):
        if self.gradients is None:
            raise ValueError("field has no gradient slices")
        return SpaceTimeField(self.grid, self.times, self.gradients)


@dataclass(frozen=True)
class NormConfig:
    T: float
    t_min: float | None = None
    delta_levels: int | None = None
    p: float = 2.0
    radii: tuple | None = None

    def __post_init__(self):
        if self.t_min is None:
            object.__setattr__(self, "t_min", self.T * 2.0**-16)
        if not 0 < self.t_min < self.T:
            raise ValueError("need 0 < t_min < T")
        if self.p < 1:
            raise ValueError("p must be >= 1")

    @property
    def delta_grid(self):
        """Dyadic scales T 2^{-j} with the Whitney window (delta/2, delta] above t_min."""
        levels = self.delta_levels
        if levels is None:
            levels = int(np.floor(np.log2(self.T / self.t_min)))
        return [self.T * 2.0**-j for j in range(levels) if self.T * 2.0**-j / 2 >= self.t_min]

    @property
    def radius_set(self):
        if self.radii is not None:
            return tuple(self.radii)
        return tuple(np.sqrt(d) for d in self.delta_grid)


@dataclass
class NormReport:
    values: dict
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        for k, v in self.values.items():
            if not (np.isfinite(v) and v >= 0):
                raise ValueError(f"norm {k} = {v} is not finite and nonnegative")

    def to_dict(self):
        return {"values": dict(self.values), "provenance": dict(self.provenance)}


def _p_norm(values, p, weight):
    values = np.abs(values)
    if np.isinf(p):
        return float(values.max())
    return float((weight * np.sum(values**p)) ** (1.0 / p))


def lebesgue_norm(grid, f, p):
    if p < 1:
        raise ValueError("p must be >= 1")
    return _p_norm(np.asarray(f), p, grid.cell_volume)


def ball_average(grid, values, radius):
    """Average of ``values`` (real, leading batch axes allowed) over wrapped balls."""
    offs = ball_offsets(grid, radius)
    return kernels.ball_sum(values, offs) / len(offs)


def _parabolic_averages(F: SpaceTimeField):
    """Per-slice averages of |F|^2 over B(x, sqrt(t)); slices at t=0 use the center cell."""
    sq = F.squared_magnitude()
    out = np.empty_like(sq)
    for i, t in enumerate(F.times):
        out[i] = ball_average(F.grid, sq[i], np.sqrt(t)) if t > 0 else sq[i]
    return out


def l2l2_norm(F: SpaceTimeField, t_min, T):
    """(int_{t_min}^T ||F(t)||_2^2 dt)^{1/2} with the same time rule as the tent norm."""
    per_slice = F.squared_magnitude().reshape(len(F.times), -1).sum(axis=1) * F.grid.cell_volume
    return float(np.sqrt(slice_integral(F.times, per_slice, t_min, T)))


def tent_norm(F: SpaceTimeField, p, cfg: NormConfig):
    """Discrete parabolic tent-space norm T^{p,2} over the window [t_min, T]."""
    if p < 1:
        raise ValueError("p must be >= 1")
    if np.isinf(p):
        return float(np.sqrt(_carleson_ball_values(F, cfg).max()))
    avgs = _parabolic_averages(F)
    square = slice_integral(F.times, avgs, cfg.t_min, cfg.T)
    return lebesgue_norm(F.grid, np.sqrt(np.maximum(square, 0.0)), p)


def _carleson_ball_values(F: SpaceTimeField, cfg: NormConfig):
    """int_{t_min}^{min(r^2, T)} avg_{B(c, r)} |F|^2 dt for every center c and radius r.

    Shape ``(len(radius_set),) + grid.shape``.
    """
    sq = F.squared_magnitude()
    out = []
    for r in cfg.radius_set:
        avgs = ball_average(F.grid, sq, r)
        out.append(slice_integral(F.times, avgs, cfg.t_min, min(r * r, cfg.T)))
    return np.maximum(np.stack(out), 0.0)


def carleson_functional(F: SpaceTimeField, cfg: NormConfig):
    """C(F)(y) = sup over balls B containing y of the normalized truncated energy on B."""
    values = _carleson_ball_values(F, cfg)
    best = np.zeros(F.grid.shape)
    for r, v in zip(cfg.radius_set, values):
        np.maximum(best, kernels.ball_max(v, ball_offsets(F.grid, r)), out=best)
    return np.sqrt(best)


def kp_maximal(F: SpaceTimeField, cfg: NormConfig):
    """Kenig-Pipher maximal function over the dyadic scales of ``cfg``."""
    sq = F.squared_magnitude()
    best = np.zeros(F.grid.shape)
    for delta in cfg.delta_grid:
        lo, hi = delta / 2, delta
        if not np.any((F.times >= lo) & (F.times <= hi)):
            raise ValueError(f"no time slice in the Whitney window [{lo:.3e}, {hi:.3e}]")
        avgs = ball_average(F.grid, sq, np.sqrt(delta))
        window = slice_integral(F.times, avgs, lo, hi) / (hi - lo)
        np.maximum(best, window, out=best)
    return np.sqrt(best)


def xp_norm(F: SpaceTimeField, p, cfg: NormConfig):
    return lebesgue_norm(F.grid, kp_maximal(F, cfg), p)


def slice_norm(grid, g, p, delta):
    """Slice-space norm: L^p norm in x of (avg over B(x, sqrt(delta)) of |g|^2)^{1/2}."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    avg = ball_average(grid, np.abs(np.asarray(g)) ** 2, np.sqrt(delta))
    return lebesgue_norm(grid, np.sqrt(avg), p)


def gradient_symbol_sq(grid):
    """|sigma(k)|^2 = sum_j 4 sin^2(pi k_j / n) / h^2 on the FFT index grid."""
    k = np.fft.fftfreq(grid.n) * grid.n
    s1 = 4.0 * np.sin(np.pi * k / grid.n) ** 2 / grid.spacing**2
    if grid.dim == 1:
        return s1
    return s1[:, None] + s1[None, :]


def hneg1_seminorm(grid, f, return_mean=False):
    """Homogeneous H^{-1} seminorm, computed spectrally after removing the mean."""
    f = np.asarray(f, dtype=np.complex128)
    mean = complex(f.mean())
    coef = np.fft.fftn(f - mean) / grid.cells
    sym = gradient_symbol_sq(grid)
    sym.flat[0] = np.inf
    value = float(np.sqrt(grid.volume * np.sum(np.abs(coef) ** 2 / sym)))
    return (value, mean) if return_mean else value


def bochner_norms(u: SpaceTimeField, p_list=(), gradient=None):
    """L^inf(L^2), L^2(L^2) of the gradient and L^inf(L^p) norms of sampled slices.

    The gradient integral runs over the sampled range with Simpson's rule.
    ``gradient`` defaults to whether gradient slices are present; asking for
    it without them is an error.
    """
    if len(u.times) < 2:
        raise ValueError("need at least two time slices")
    g = u.grid
    want_grad = u.gradients is not None if gradient is None else gradient
    values = {
        "Linf_L2": max(lebesgue_norm(g, s, 2) if not u.is_vector else
                       lebesgue_norm(g, np.sqrt((np.abs(s) ** 2).sum(axis=0)), 2)
                       for s in u.slices)
    }
    if want_grad:
        if u.gradients is None:
            raise ValueError("gradient norm requested but the field has no gradient slices")
        per = (np.abs(u.gradients) ** 2).reshape(len(u.times), -1).sum(axis=1) * g.cell_volume
        sq = float(simpson(per, x=u.times))
        values["grad_L2L2_sq"] = sq
        values["grad_L2L2"] = float(np.sqrt(max(sq, 0.0)))
    for p in p_list:
        key = "Linf_Linf" if np.isinf(p) else f"Linf_L{p:g}"
        values[key] = max(lebesgue_norm(g, np.abs(s) if not u.is_vector else
                                        np.sqrt((np.abs(s) ** 2).sum(axis=0)), p)
                          for s in u.slices)
    prov = {"grid": repr(g), "t_first": float(u.times[0]), "t_last": float(u.times[-1])}
    return NormReport(values, prov)
