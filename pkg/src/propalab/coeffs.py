"""Time-staircase coefficient fields A(t, x), their ellipticity and BV seminorm.

A :class:`CoefficientField` holds one ``dim x dim`` complex matrix per cell and
per time piece. The matrix at cell ``i`` multiplies the forward-difference
gradient at ``i``, i.e. the bundle of edges leaving cell ``i`` in the positive
axis directions. With that placement ``<A grad u, grad u>`` is a plain
cell sum and the discrete form inherits the pointwise ellipticity bounds.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.integrate import quad_vec

from .grid import Grid


class EllipticityError(ValueError):
    """Raised when a coefficient field fails the lower ellipticity bound."""


@dataclass(frozen=True)
class EllipticityConstants:
    lower: float
    upper: float
    dim: int

    def __post_init__(self):
        if not 0 < self.lower <= self.upper * (1 + 1e-12):
            raise EllipticityError(
                f"need 0 < lambda <= Lambda, got lambda={self.lower}, Lambda={self.upper}"
            )

    @property
    def alpha(self):
        """Gaussian off-diagonal decay rate lambda / (4 Lambda^2)."""
        return self.lower / (4.0 * self.upper**2)

    @property
    def rh_exponent(self):
        """Reverse Hoelder exponent 2 + 4/dim."""
        return 2.0 + 4.0 / self.dim

    def as_dict(self):
        return {
            "lambda": self.lower,
            "Lambda": self.upper,
            "alpha": self.alpha,
            "rh_exponent": self.rh_exponent,
        }


def _hermitian_min_eig(mats):
    herm = 0.5 * (mats + np.conj(np.swapaxes(mats, -1, -2)))
    return np.linalg.eigvalsh(herm)[..., 0]


def _op_norm(mats):
    return np.linalg.svd(mats, compute_uv=False)[..., 0]


def matrix_bounds(mats):
    """(min Hermitian-part eigenvalue, max operator norm) over a stack of matrices."""
    mats = np.asarray(mats, dtype=np.complex128)
    return float(_hermitian_min_eig(mats).min()), float(_op_norm(mats).max())


@dataclass(frozen=True, eq=False)
class CoefficientField:
    grid: Grid
    breakpoints: np.ndarray
    pieces: np.ndarray
    name: str = "custom"

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        pieces = np.asarray(self.pieces, dtype=np.complex128)
        d = self.grid.dim
        if bp.ndim != 1 or len(bp) < 2 or bp[0] != 0.0 or np.any(np.diff(bp) <= 0):
            raise ValueError("breakpoints must increase strictly from 0")
        expected = (len(bp) - 1,) + self.grid.shape + (d, d)
        if pieces.shape != expected:
            raise ValueError(f"pieces must have shape {expected}, got {pieces.shape}")
        if not np.all(np.isfinite(pieces)):
            raise ValueError("coefficient pieces must be finite")
        bp.setflags(write=False)
        pieces.setflags(write=False)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "pieces", pieces)

    @property
    def T(self):
        return float(self.breakpoints[-1])

    @property
    def num_pieces(self):
        return len(self.pieces)

    def piece_index(self, t):
        """Index k of the piece [t_k, t_{k+1}) containing t (the last piece is closed)."""
        if t < 0 or t > self.T * (1 + 1e-14):
            raise ValueError(f"time {t} outside [0, {self.T}]")
        k = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return min(k, self.num_pieces - 1)

    def __call__(self, t):
        return self.pieces[self.piece_index(t)]

    @cached_property
    def ellipticity(self):
        return check_ellipticity(self)

    @cached_property
    def bv(self):
        if self.num_pieces < 2:
            return 0.0
        jumps = np.diff(self.pieces, axis=0)
        sup = _op_norm(jumps).reshape(self.num_pieces - 1, -1).max(axis=1)
        return float(sup.sum())

    def is_real_scalar(self, tol=1e-14):
        """True when every piece is a real multiple of the identity at every cell."""
        d = self.grid.dim
        diag = self.pieces[..., 0, 0]
        scal = diag[..., None, None] * np.eye(d)
        return bool(
            np.abs(self.pieces - scal).max() <= tol and np.abs(diag.imag).max() <= tol
        )

    def adjoint_reversed(self):
        """Coefficients s -> A(T - s)^*, pieces conjugate-transposed in reverse order."""
        bp = self.T - self.breakpoints[::-1]
        bp[0] = 0.0
        pieces = np.conj(np.swapaxes(self.pieces[::-1], -1, -2))
        return CoefficientField(self.grid, bp, pieces, name=f"{self.name}*reversed")

    def frozen(self, k):
        """The single-piece (autonomous) field holding piece k on [0, T]."""
        return CoefficientField(
            self.grid, np.array([0.0, self.T]), self.pieces[k : k + 1], name=f"{self.name}[{k}]"
        )

    def extended_to(self, T):
        """Same field, with the last piece held frozen up to the later horizon ``T``."""
        if T < self.T:
            raise ValueError(f"cannot extend a field on [0, {self.T}] to the shorter horizon {T}")
        bp = self.breakpoints.copy()
        bp[-1] = T
        return CoefficientField(self.grid, bp, self.pieces, name=self.name)


def check_ellipticity(A):
    """Measure (lambda, Lambda) over all pieces and cells of a coefficient field."""
    lam, Lam = matrix_bounds(A.pieces)
    if lam <= 0:
        raise EllipticityError(f"coefficient field {A.name!r} is not elliptic: lambda={lam:.3e}")
    return EllipticityConstants(lam, max(Lam, lam), A.grid.dim)


def identity_pieces(grid, values):
    """Turn scalar per-cell values of shape ``(K,) + grid.shape`` into ``values * I``."""
    values = np.asarray(values, dtype=np.complex128)
    return values[..., None, None] * np.eye(grid.dim)


def smooth_random_field(grid, seed, modes=3, complex_valued=True, decay=1.0):
    """Trigonometric polynomial with seeded coefficients, normalized to max |f| = 1.

    The coefficients depend only on ``(seed, modes)``, so the same continuum
    field is sampled at every resolution.
    """
    rng = np.random.default_rng(seed)
    ks = np.array(np.meshgrid(*([np.arange(-modes, modes + 1)] * grid.dim), indexing="ij"))
    ks = ks.reshape(grid.dim, -1).T
    coef = rng.standard_normal(len(ks)) + 1j * rng.standard_normal(len(ks))
    coef /= 1.0 + decay * np.sum(ks**2, axis=1)
    x = grid.coordinates.reshape(grid.dim, -1)
    phase = 2j * np.pi * (ks @ x) / grid.period
    f = (coef @ np.exp(phase)).reshape(grid.shape)
    if not complex_valued:
        f = f.real
    return f / np.abs(f).max()


def random_elliptic_staircase(grid, seed, lower=0.5, upper=2.0, pieces=4, T=1.0):
    """Random complex staircase with measured constants inside [lower, upper].

    In 1D each edge carries a complex scalar a with Re a >= lower and |a| <= upper.
    In 2D the matrix is a I + c J, J the quarter-turn rotation, whose Hermitian
    part is (Re a) I and whose norm is max |a +- i c|; draws outside the
    bounds are resampled cellwise.
    """
    if not 0 < lower < upper:
        raise ValueError("need 0 < lower < upper")
    rng = np.random.default_rng(seed)
    shape = (pieces,) + grid.shape

    def scalars():
        re = rng.uniform(lower, upper, shape)
        im = rng.uniform(-1.0, 1.0, shape) * np.sqrt(upper**2 - re**2)
        return re + 1j * im

    a = scalars()
    if grid.dim == 1:
        mats = a[..., None, None]
    else:
        J = np.array([[0.0, 1.0], [-1.0, 0.0]])
        c = rng.uniform(-0.5, 0.5, shape) * (upper - lower)
        bad = np.maximum(np.abs(a + 1j * c), np.abs(a - 1j * c)) > upper
        while np.any(bad):
            c[bad] *= 0.5
            bad = np.maximum(np.abs(a + 1j * c), np.abs(a - 1j * c)) > upper
        mats = a[..., None, None] * np.eye(2) + c[..., None, None] * J
    return CoefficientField(grid, _equal_breakpoints(T, pieces), mats, name=f"random_staircase[{seed}]")


def _checkerboard(grid, lo, hi, tiles):
    tile = grid.period / tiles
    idx = np.floor(grid.coordinates / tile + 1e-9).astype(int).sum(axis=0)
    return np.where(idx % 2 == 0, lo, hi)


def _equal_breakpoints(T, pieces):
    return np.linspace(0.0, T, pieces + 1)


def _scenario_heat(grid, p):
    T = float(p.get("T", 1.0))
    return _equal_breakpoints(T, 1), identity_pieces(grid, np.ones((1,) + grid.shape))


def _scenario_checkerboard(grid, p):
    T = float(p.get("T", 1.0))
    lo, hi = float(p.get("lo", 0.5)), float(p.get("hi", 2.0))
    if not 0 < lo <= hi:
        raise EllipticityError(f"checkerboard needs 0 < lo <= hi, got lo={lo}, hi={hi}")
    a = _checkerboard(grid, lo, hi, int(p.get("tiles", 4)))
    return _equal_breakpoints(T, 1), identity_pieces(grid, a[None])


def _perturbation_matrix(grid, seed, modes):
    d = grid.dim
    B = np.empty(grid.shape + (d, d), dtype=np.complex128)
    for i in range(d):
        for j in range(d):
            B[..., i, j] = smooth_random_field(grid, seed * 97 + 10 * i + j, modes)
    return B / _op_norm(B).max()


def _scenario_complex_perturb(grid, p):
    T = float(p.get("T", 1.0))
    eps = float(p.get("eps", 0.05))
    if not 0 <= eps < 1:
        raise EllipticityError(f"complex_perturb needs 0 <= eps < 1 for ellipticity, got {eps}")
    K = int(p.get("pieces", 4))
    seed, modes = int(p.get("seed", 0)), int(p.get("modes", 3))
    eye = np.eye(grid.dim)
    pieces = np.stack(
        [eye + eps * _perturbation_matrix(grid, seed + k, modes) for k in range(K)]
    )
    return _equal_breakpoints(T, K), pieces


def _scenario_bv_staircase(grid, p):
    T = float(p.get("T", 1.0))
    if "jumps" in p:
        jumps = np.asarray(p["jumps"], dtype=float)
    else:
        count = int(p.get("jump_count", 4))
        jumps = np.full(count, float(p.get("budget", 0.5)) / count)
    if np.any(jumps < 0):
        raise ValueError("jump sizes must be nonnegative")
    base = complex(float(p.get("base", 1.5)), float(p.get("base_imag", 0.0)))
    s = smooth_random_field(
        grid, int(p.get("seed", 0)), int(p.get("modes", 3)), bool(p.get("complex", True))
    ) * np.exp(1j * float(p.get("jump_phase", 0.0)))
    levels = np.concatenate([[0.0], np.cumsum(jumps)])
    values = base + levels[:, None] * s.reshape(1, -1)
    values = values.reshape((len(levels),) + grid.shape)
    return _equal_breakpoints(T, len(levels)), identity_pieces(grid, values)


def _scenario_time_oscillating(grid, p):
    T = float(p.get("T", 1.0))
    amp, freq = float(p.get("amp", 0.5)), float(p.get("freq", 2.0))
    if not 0 <= amp < 1:
        raise EllipticityError(f"time_oscillating needs 0 <= amp < 1, got {amp}")
    a = _checkerboard(grid, float(p.get("lo", 0.5)), float(p.get("hi", 2.0)), int(p.get("tiles", 4)))
    eye = np.eye(grid.dim)

    def spec(t):
        return (a * (1.0 + amp * np.sin(2 * np.pi * freq * t)))[..., None, None] * eye

    field = time_average_refine(spec, grid, int(p.get("level", 4)), T=T)
    return field.breakpoints, field.pieces


SCENARIOS = {
    "heat": _scenario_heat,
    "real_checkerboard": _scenario_checkerboard,
    "complex_perturb": _scenario_complex_perturb,
    "bv_staircase": _scenario_bv_staircase,
    "time_oscillating": _scenario_time_oscillating,
}


def make_scenario(name, grid, params=None):
    """Build one of the named coefficient scenarios and validate its ellipticity."""
    if name not in SCENARIOS:
        raise ValueError(f"unknown scenario {name!r}; known: {sorted(SCENARIOS)}")
    breakpoints, pieces = SCENARIOS[name](grid, dict(params or {}))
    field = CoefficientField(grid, breakpoints, pieces, name=name)
    field.ellipticity  # raises EllipticityError when violated
    return field


def time_average_refine(spec, grid, level, T=None, tol=1e-10):
    """Dyadic time averages of a time-dependent coefficient.

    ``spec(t)`` returns either ``grid.shape + (dim, dim)`` matrices or a scalar
    field of shape ``grid.shape`` (read as a multiple of the identity). A
    :class:`CoefficientField` is accepted directly; its breakpoints then split
    the quadrature so that averaging a staircase is exact.
    """
    if level < 0:
        raise ValueError("level must be >= 0")
    points = ()
    if isinstance(spec, CoefficientField):
        T = spec.T if T is None else T
        points = tuple(spec.breakpoints[1:-1])
    if T is None:
        raise ValueError("horizon T is required for a callback coefficient")
    step = 2.0**-level
    edges = np.arange(0.0, T, step)
    edges = np.append(edges, T)
    if edges[-1] - edges[-2] < 1e-12 * step:
        edges = np.delete(edges, -2)

    def as_matrix(t):
        val = np.asarray(spec(t), dtype=np.complex128)
        if val.shape == grid.shape:
            val = val[..., None, None] * np.eye(grid.dim)
        return val

    pieces = []
    for a, b in zip(edges[:-1], edges[1:]):
        inner = tuple(x for x in points if a < x < b) or None
        res, err, info = quad_vec(
            as_matrix, a, b, epsabs=tol * (b - a), epsrel=tol, points=inner, full_output=True
        )
        if not info.success:
            raise RuntimeError(f"quadrature did not converge on [{a}, {b}]: {info.message}")
        pieces.append(res / (b - a))
    name = getattr(spec, "name", "callback")
    return CoefficientField(grid, edges, np.stack(pieces), name=f"{name}@avg{level}")
