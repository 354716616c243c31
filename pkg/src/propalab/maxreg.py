"""Maximal-regularity operators M_L, M~_L and R_L for one frozen operator L.

All three are causal convolutions in time against the semigroup. Time is cut
into panels on which the source is frozen, and each panel is integrated
exactly against the semigroup:

    int_{s_lo}^{s_hi} L e^{-(t-s)L} ds = e^{-(t-s_hi)L} - e^{-(t-s_lo)L},
    int_{s_lo}^{s_hi}   e^{-(t-s)L} ds = e^{-(t-s_hi)L} Phi(H),

so the singularity of L e^{-tau L} at tau = 0 never has to be sampled. On a
time grid the sums collapse to the Horner sweep ``S <- E(H) S + W f_panel``.

M~_L is computed through the vector-field operator L~ = G G^T A, which
satisfies G e^{-tau L} = e^{-tau L~} G. With div = -G^T and G G^T = L~ A^{-1}
the integrand becomes -L~ e^{-tau L~} A^{-1} f, again a pure semigroup
difference. This gives M~_L independently of R_L, so ``grad R_L = M~_L``
is a genuine check.
"""

import threading
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .coeffs import CoefficientField
from .evolve import DENSE_LIMIT, DiscreteOperator, SolverError, expm_and_integral
from .grid import gradient_matrix
from .norms import SpaceTimeField


@dataclass(eq=False)
class AutonomousKit:
    L: DiscreteOperator
    tol: float = 1e-9
    max_level: int = 12
    _cache: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def __post_init__(self):
        if not self.tol > 0:
            raise ValueError("quadrature tolerance must be positive")
        g = self.L.grid
        if g.dim * g.cells > DENSE_LIMIT:
            raise ValueError(f"maximal-regularity kit is dense; {g.dim * g.cells} unknowns is too many")

    @classmethod
    def from_field(cls, A: CoefficientField, piece=0, **kw):
        return cls(DiscreteOperator(A.grid, A.pieces[piece], piece), **kw)

    @property
    def grid(self):
        return self.L.grid

    def _get(self, key, build):
        with self._lock:
            if key in self._cache:
                return self._cache[key]
        value = build()
        with self._lock:
            self._cache.setdefault(key, value)
            return self._cache[key]

    @property
    def G(self):
        return self._get("G", lambda: gradient_matrix(self.grid).toarray())

    @property
    def Ltilde(self):
        return self._get("Lt", lambda: self.G @ self.G.T @ self.L.flux_matrix.toarray())

    @property
    def flux_inverse(self):
        return self._get("Ainv", lambda: np.linalg.inv(self.L.flux_matrix.toarray()))

    def scalar_step(self, H):
        """(E(H), Phi(H)) for L."""
        return self._get(("L", float(H)), lambda: expm_and_integral(self.L.dense, H))

    def vector_step(self, H):
        """E~(H) = e^{-H L~}."""
        return self._get(("Lt", float(H)), lambda: sla.expm(-H * self.Ltilde))


# -- panel sweeps ---------------------------------------------------------------

def _flat_vec(grid, f):
    return np.asarray(f, dtype=np.complex128).reshape(grid.dim * grid.cells)


def _sweep(kit, kind, times, panel_values):
    """Run the Horner sweep for ``kind`` in {"ML", "RL", "MLt"}.

    ``panel_values(j)`` yields, for output interval j, a list of
    ``(H, f_panel)`` panels covering [times[j-1], times[j]] in order.
    """
    g = kit.grid
    size = g.cells if kind == "ML" or kind == "RL" else g.dim * g.cells
    S = np.zeros(size, dtype=np.complex128)
    out = [S.copy()]
    D = -kit.G.T
    for j in range(1, len(times)):
        for H, fp in panel_values(j):
            if kind == "ML":
                E, _ = kit.scalar_step(H)
                v = fp.ravel()
                S = E @ (S - v) + v
            elif kind == "RL":
                E, Phi = kit.scalar_step(H)
                S = E @ S + Phi @ (D @ _flat_vec(g, fp))
            else:
                E = kit.vector_step(H)
                w = kit.flux_inverse @ _flat_vec(g, fp)
                S = E @ (S + w) - w
        out.append(S.copy())
    return np.stack(out)


def _shape_out(kit, kind, raw):
    g = kit.grid
    shape = g.shape if kind == "ML" or kind == "RL" else (g.dim,) + g.shape
    return raw.reshape((len(raw),) + shape)


def _check_times(times):
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or len(times) < 2 or times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise ValueError("output times must start at 0 and increase strictly")
    return times


def _apply(kit, kind, f, times=None, want_vector_input=False):
    g = kit.grid
    if isinstance(f, SpaceTimeField):
        if f.is_vector != want_vector_input:
            raise ValueError(f"{kind} expects a {'vector' if want_vector_input else 'scalar'} field")
        if len(f.times) < 64:
            raise ValueError("source must be sampled with at least 64 slices")
        ts = _check_times(f.times)
        data = f.slices

        def panels(j):
            return [(ts[j] - ts[j - 1], 0.5 * (data[j] + data[j - 1]))]

        raw = _sweep(kit, kind, ts, panels)
        return SpaceTimeField(g, ts, _shape_out(kit, kind, raw)), {"levels": 0}

    if not callable(f):
        raise TypeError("source must be a SpaceTimeField or a callable of time")
    ts = _check_times(times)
    scale = None

    def level_sweep(level):
        m = 2**level

        def panels(j):
            H = (ts[j] - ts[j - 1]) / m
            return [(H, np.asarray(f(ts[j - 1] + (i + 0.5) * H))) for i in range(m)]

        return _sweep(kit, kind, ts, panels)

    table, history = [], []
    for level in range(kit.max_level + 1):
        row = [level_sweep(level)]
        for i, prev in enumerate(table[-1] if table else []):
            row.append(row[i] + (row[i] - prev) / (4 ** (i + 1) - 1))
        table.append(row)
        if scale is None:
            scale = max(float(np.abs(row[0]).max()), 1.0)
        if len(table) >= 2:
            change = float(np.abs(row[-1] - table[-2][-1]).max()) / scale
            history.append(change)
            if change < kit.tol:
                info = {"levels": level, "changes": history}
                return SpaceTimeField(g, ts, _shape_out(kit, kind, row[-1])), info
    raise SolverError(f"{kind} quadrature stagnated; last change {history[-1]:.2e}")


def apply_ML(kit: AutonomousKit, f, times=None):
    """M_L f(t) = int_0^t L e^{-(t-s)L} f(s) ds, sampled at ``times`` (or f.times)."""
    return _apply(kit, "ML", f, times)[0]


def apply_ML_tilde(kit: AutonomousKit, f, times=None):
    """M~_L f(t) = int_0^t grad e^{-(t-s)L} div f(s) ds for vector-valued f."""
    return _apply(kit, "MLt", f, times, want_vector_input=True)[0]


def apply_RL(kit: AutonomousKit, f, times=None):
    """R_L f(t) = int_0^t e^{-(t-s)L} div f(s) ds for vector-valued f."""
    return _apply(kit, "RL", f, times, want_vector_input=True)[0]


def gradient_of(F: SpaceTimeField):
    from .grid import discrete_gradient

    grads = np.stack([discrete_gradient(F.grid, s) for s in F.slices])
    return SpaceTimeField(F.grid, F.times, grads)


# -- operator-norm probing ----------------------------------------------------------

def estimate_operator_norm(op, source_norm, target_norm, probes):
    """Largest ratio target_norm(op(f)) / source_norm(f) over the probes.

    A lower bound for the operator norm; zero-norm probes are skipped.
    """
    probes = list(probes)
    if len(probes) < 16:
        raise ValueError("at least 16 probes are required")
    best = 0.0
    for f in probes:
        s = source_norm(f)
        if s <= 0:
            continue
        best = max(best, target_norm(op(f)) / s)
    return float(best)


def _smooth_profile(rng, times, modes=4):
    T = times[-1]
    c = rng.standard_normal(modes + 1) + 1j * rng.standard_normal(modes + 1)
    k = np.arange(modes + 1)
    return np.cos(np.pi * np.outer(times / T, k)) @ (c / (1.0 + k))


def random_probes(grid, times, count, seed, vector=False, modes=3):
    """Smooth random space-time probes, identical functions across resolutions.

    Each probe is a trigonometric polynomial in space (fixed low modes, seeded)
    times a cosine series in time, so refining the grid samples the same field.
    """
    from .coeffs import smooth_random_field

    times = np.asarray(times, dtype=float)
    rng = np.random.default_rng(seed)
    out = []
    for i in range(count):
        comps = []
        for c in range(grid.dim if vector else 1):
            space = smooth_random_field(grid, int(rng.integers(2**31)), modes=modes)
            comps.append(np.multiply.outer(_smooth_profile(rng, times), space))
        data = np.stack(comps, axis=1) if vector else comps[0]
        out.append(SpaceTimeField(grid, times, data))
    return out
