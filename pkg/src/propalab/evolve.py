"""Discrete operators L = -div A grad, semigroup steps and the propagator family.

For a staircase coefficient field the propagator is the ordered product of
frozen-coefficient semigroups,

    Gamma(t, s) = e^{-(t - t_j) L_j} e^{-(t_j - t_{j-1}) L_{j-1}} ... e^{-(t_{i+1} - s) L_i},

and its adjoint applies the conjugate-transposed factors in reverse order.
Fields are arrays of shape ``grid.shape``; dense matrices act on the
row-major flattening.
"""

import math
import threading
from collections import OrderedDict
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import kernels
from .coeffs import CoefficientField, EllipticityError
from .grid import Grid, discrete_divergence, discrete_gradient, gradient_matrix
from .quadrature import graded_gauss

DENSE_LIMIT = 4096
SCHEMES = ("exact_expm", "crank_nicolson", "backward_euler")


class SolverError(RuntimeError):
    pass


@dataclass(frozen=True)
class Scheme:
    kind: str = "exact_expm"
    substeps: int | None = None

    def __post_init__(self):
        if self.kind not in SCHEMES:
            raise ValueError(f"unknown scheme {self.kind!r}; expected one of {SCHEMES}")
        if self.substeps is not None and self.substeps < 1:
            raise ValueError("substeps must be >= 1")


def default_scheme(grid):
    return Scheme("exact_expm") if grid.cells <= DENSE_LIMIT else Scheme("crank_nicolson")


def _probe_fields(grid, count=16, seed=12345):
    rng = np.random.default_rng(seed)
    probes = [
        rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
        for _ in range(count)
    ]
    x = grid.coordinates
    for k in (1, grid.n // 2):
        probes.append(np.exp(2j * np.pi * k * x[0] / grid.period))
    return probes


class DiscreteOperator:
    """Frozen-coefficient operator ``u -> -div(A grad u)`` on one time piece."""

    def __init__(self, grid: Grid, coeff, piece_index=None):
        self.grid = grid
        self.coeff = np.asarray(coeff, dtype=np.complex128)
        self.piece_index = piece_index

    def matvec(self, u):
        return kernels.divergence_form(u, self.coeff, self.grid.spacing)

    __call__ = matvec

    @cached_property
    def flux_matrix(self):
        """Block matrix of pointwise multiplication by A on component-major vector fields."""
        d = self.grid.dim
        blocks = [
            [sp.diags(self.coeff[..., i, j].ravel()) for j in range(d)] for i in range(d)
        ]
        return sp.bmat(blocks, format="csr") if d > 1 else blocks[0][0].tocsr()

    @cached_property
    def matrix(self):
        G = gradient_matrix(self.grid)
        return (G.T @ self.flux_matrix @ G).tocsc()

    @cached_property
    def dense(self):
        if self.grid.cells > DENSE_LIMIT:
            raise ValueError(f"dense operator requested on {self.grid.cells} > {DENSE_LIMIT} cells")
        return self.matrix.toarray()

    def adjoint(self):
        return DiscreteOperator(
            self.grid, np.conj(np.swapaxes(self.coeff, -1, -2)), self.piece_index
        )

    @cached_property
    def is_hermitian(self):
        c = self.coeff
        return bool(np.abs(c - np.conj(np.swapaxes(c, -1, -2))).max() <= 1e-15 * max(1.0, np.abs(c).max()))

    @cached_property
    def accretivity_certificate(self):
        """min over probes of Re<Lu, u> / ||grad u||^2."""
        ratios = []
        for u in _probe_fields(self.grid):
            g = self.grid.norm(discrete_gradient(self.grid, u)) ** 2
            if g > 0:
                ratios.append(self.grid.inner(self.matvec(u), u).real / g)
        return float(min(ratios))

    @cached_property
    def norm_bound(self):
        """Upper bound on the spectral radius: 4 dim max|A| / h^2."""
        return 4.0 * self.grid.dim * float(np.abs(self.coeff).sum(axis=-1).max()) / self.grid.spacing**2


def assemble_operator(A: CoefficientField, k):
    if not 0 <= k < A.num_pieces:
        raise IndexError(f"piece index {k} out of range for {A.num_pieces} pieces")
    op = DiscreteOperator(A.grid, A.pieces[k], k)
    if op.accretivity_certificate < 0:
        raise EllipticityError(
            f"piece {k}: negative accretivity certificate {op.accretivity_certificate:.3e}"
        )
    return op


def _check_residual(M, x, b, what):
    res = np.linalg.norm(M @ x - b)
    if res > 1e-12 * max(np.linalg.norm(b), 1e-300):
        raise SolverError(f"{what}: linear solve residual {res:.2e} above 1e-12 relative")


class _Stepper:
    """Implicit substep factors for one piece and one substep length."""

    def __init__(self, op, dt, kind):
        I = sp.identity(op.grid.cells, format="csc", dtype=np.complex128)
        L = op.matrix.astype(np.complex128)
        if kind == "crank_nicolson":
            self.lhs = (I + 0.5 * dt * L).tocsc()
            self.rhs = (I - 0.5 * dt * L).tocsc()
        else:
            self.lhs = (I + dt * L).tocsc()
            self.rhs = None
        self.lu = spla.splu(self.lhs)

    def forward(self, v):
        b = self.rhs @ v if self.rhs is not None else v
        x = self.lu.solve(b)
        _check_residual(self.lhs, x, b, "implicit step")
        return x

    def backward(self, v):
        x = self.lu.solve(v, trans="H")
        _check_residual(self.lhs.conj().T, x, v, "adjoint implicit step")
        return self.rhs.conj().T @ x if self.rhs is not None else x


def semigroup_step(L: DiscreteOperator, tau, u, scheme=None, substeps=None):
    """Approximate ``e^{-tau L} u`` with the chosen scheme."""
    scheme = scheme or default_scheme(L.grid)
    if isinstance(scheme, str):
        scheme = Scheme(scheme, substeps)
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    u = np.asarray(u, dtype=np.complex128)
    if tau == 0:
        return u.copy()
    if scheme.kind == "exact_expm":
        E = sla.expm(-tau * L.dense)
        return (E @ u.ravel()).reshape(u.shape)
    m = scheme.substeps or max(1, math.ceil(tau / L.grid.spacing**2))
    stepper = _Stepper(L, tau / m, scheme.kind)
    v = u.ravel()
    for _ in range(m):
        v = stepper.forward(v)
    return v.reshape(u.shape)


class Propagator:
    """The family Gamma(t, s), 0 <= s <= t <= T, for a staircase coefficient field."""

    def __init__(self, A: CoefficientField, scheme=None, cache_size=512):
        self.A = A
        self.grid = A.grid
        if isinstance(scheme, str):
            scheme = Scheme(scheme)
        self.scheme = scheme or default_scheme(A.grid)
        if self.scheme.kind == "exact_expm" and self.grid.cells > DENSE_LIMIT:
            raise ValueError(
                f"exact_expm needs <= {DENSE_LIMIT} cells, grid has {self.grid.cells}"
            )
        self.operators = [assemble_operator(A, k) for k in range(A.num_pieces)]
        self._cache = OrderedDict()
        self._cache_size = cache_size
        self._lock = threading.Lock()

    @property
    def T(self):
        return self.A.T

    # -- factor path -------------------------------------------------------
    def path(self, t, s):
        """Ordered list of (piece, duration) factors from time s to time t."""
        if t < s:
            raise ValueError(f"propagator needs s <= t, got s={s}, t={t}")
        if s < 0 or t > self.T * (1 + 1e-14):
            raise ValueError(f"times must lie in [0, {self.T}]")
        bp = self.A.breakpoints
        out = []
        cur = s
        k = self.A.piece_index(s)
        while cur < t:
            end = min(t, bp[k + 1]) if k + 1 < len(bp) else t
            if k == self.A.num_pieces - 1:
                end = t
            if end > cur:
                out.append((k, end - cur))
            cur = end
            k += 1
        return out

    def _substeps(self, k, tau):
        width = self.A.breakpoints[k + 1] - self.A.breakpoints[k]
        per_piece = self.scheme.substeps or math.ceil(width / self.grid.spacing**2)
        return max(1, math.ceil(per_piece * tau / width - 1e-9))

    def _factor(self, k, tau):
        key = (k, float(tau))
        with self._lock:
            hit = self._cache.get(key)
            if hit is not None:
                self._cache.move_to_end(key)
                return hit
        if self.scheme.kind == "exact_expm":
            value = sla.expm(-tau * self.operators[k].dense)
        else:
            m = self._substeps(k, tau)
            value = (m, _Stepper(self.operators[k], tau / m, self.scheme.kind))
        with self._lock:
            self._cache[key] = value
            if len(self._cache) > self._cache_size:
                self._cache.popitem(last=False)
        return value

    def _forward_factor(self, k, tau, v):
        F = self._factor(k, tau)
        if self.scheme.kind == "exact_expm":
            return F @ v
        m, stepper = F
        for _ in range(m):
            v = stepper.forward(v)
        return v

    def _adjoint_factor(self, k, tau, v):
        F = self._factor(k, tau)
        if self.scheme.kind == "exact_expm":
            return F.conj().T @ v
        m, stepper = F
        for _ in range(m):
            v = stepper.backward(v)
        return v

    # -- public actions ----------------------------------------------------
    def apply(self, t, s, f):
        f = np.asarray(f, dtype=np.complex128)
        v = f.reshape(-1, self.grid.cells).T if f.shape != self.grid.shape else f.ravel()
        for k, tau in self.path(t, s):
            v = self._forward_factor(k, tau, v)
        return v.T.reshape(f.shape) if f.shape != self.grid.shape else v.reshape(f.shape)

    def adjoint_apply(self, t, s, h):
        h = np.asarray(h, dtype=np.complex128)
        v = h.reshape(-1, self.grid.cells).T if h.shape != self.grid.shape else h.ravel()
        for k, tau in reversed(self.path(t, s)):
            v = self._adjoint_factor(k, tau, v)
        return v.T.reshape(h.shape) if h.shape != self.grid.shape else v.reshape(h.shape)

    def dense(self, t, s):
        """Dense matrix of Gamma(t, s) (grids up to DENSE_LIMIT cells)."""
        if self.grid.cells > DENSE_LIMIT:
            raise ValueError("dense propagator only available on small grids")
        M = np.eye(self.grid.cells, dtype=np.complex128)
        for k, tau in self.path(t, s):
            if self.scheme.kind == "exact_expm":
                M = self._factor(k, tau) @ M
            else:
                M = self._forward_factor(k, tau, M)
        return M

    def kernel_column(self, t, s, source_cell):
        """k(t, s, ., y): Gamma(t, s) applied to the discrete delta at ``source_cell``."""
        if not t > s:
            raise ValueError("kernel columns need t > s")
        delta = np.zeros(self.grid.shape, dtype=np.complex128)
        delta.flat[self.grid.ravel(self.grid.unravel(source_cell))] = 1.0 / self.grid.cell_volume
        return self.apply(t, s, delta)


def build_propagator(A: CoefficientField, scheme=None):
    return Propagator(A, scheme)


def apply_propagator(P: Propagator, t, s, f):
    return P.apply(t, s, f)


def adjoint_apply(P: Propagator, t, s, h):
    return P.adjoint_apply(t, s, h)


def kernel_column(P: Propagator, t, s, source_cell):
    return P.kernel_column(t, s, source_cell)


# -- dense semigroup helpers ---------------------------------------------------

def expm_and_integral(M, H):
    """Return ``(e^{-H M}, int_0^H e^{-sigma M} d sigma)`` from one block exponential."""
    n = M.shape[0]
    block = np.zeros((2 * n, 2 * n), dtype=np.result_type(M, np.complex128))
    block[:n, :n] = -H * M
    block[:n, n:] = H * np.eye(n)
    E = sla.expm(block)
    return E[:n, :n], E[:n, n:]


def duhamel_residual(P: Propagator, reference, h, t, tol=1e-8, max_level=16):
    """Relative residual of the Duhamel formula against an autonomous reference.

    ``reference`` is the matrix field A_ref (``grid.shape + (dim, dim)``) or a
    single-piece :class:`CoefficientField`. The perturbation integral is
    computed with the exponentially weighted composite midpoint rule on every
    piece, refined dyadically with Richardson extrapolation until successive
    extrapolated estimates differ by less than ``tol`` (relative to ``||h||``).
    Returns ``(residual, info)``.
    """
    grid = P.grid
    if isinstance(reference, CoefficientField):
        reference = reference.pieces[0]
    ref_op = DiscreteOperator(grid, reference)
    if ref_op.accretivity_certificate <= 0:
        raise EllipticityError("reference coefficients are not elliptic")
    Lref = ref_op.dense
    h = np.asarray(h, dtype=np.complex128)
    hn = max(grid.norm(h), 1e-300)

    segments = [(k, tau) for k, tau in P.path(t, 0.0)]
    starts = np.concatenate([[0.0], np.cumsum([tau for _, tau in segments])])[:-1]
    diffs = [P.A.pieces[k] - reference for k, _ in segments]

    def integral(level):
        S = np.zeros(grid.cells, dtype=np.complex128)
        panels = 2**level
        for (k, tau), a, dA in zip(segments, starts, diffs):
            H = tau / panels
            Eref, Phi = expm_and_integral(Lref, H)
            u = P.apply(a + 0.5 * H, 0.0, h).ravel()
            Ek = sla.expm(-H * P.operators[k].dense)
            for _ in range(panels):
                w = _div_flux(grid, dA, u.reshape(grid.shape)).ravel()
                S = Eref @ S + Phi @ w
                u = Ek @ u
        return S

    lhs = P.apply(t, 0.0, h).ravel() - sla.expm(-t * Lref) @ h.ravel()
    table = []
    history = []
    for level in range(max_level + 1):
        row = [integral(level)]
        for j, prev in enumerate(table[-1] if table else []):
            row.append(row[j] + (row[j] - prev) / (4 ** (j + 1) - 1))
        table.append(row)
        if len(table) >= 2:
            change = grid.norm((row[-1] - table[-2][-1]).reshape(grid.shape)) / hn
            history.append(change)
            if change < tol:
                res = grid.norm((lhs - row[-1]).reshape(grid.shape)) / hn
                return res, {"levels": level, "changes": history}
    raise SolverError(f"Duhamel quadrature stagnated; last change {history[-1]:.2e}")


def _div_flux(grid, coeff, u):
    g = discrete_gradient(grid, u)
    flux = np.einsum("...ij,j...->i...", coeff, g)
    return discrete_divergence(grid, flux)


# -- sampled trajectories ------------------------------------------------------

class ModalPiece:
    """Eigen-decomposition of one frozen operator, for cheap e^{-tau L} at many tau."""

    def __init__(self, op: DiscreteOperator, max_cond=1e8):
        L = op.dense
        if op.is_hermitian:
            mu, V = np.linalg.eigh(L)
            self.mu, self.V, self.Vinv = mu.astype(np.complex128), V, V.conj().T
        else:
            mu, V = np.linalg.eig(L)
            if np.linalg.cond(V) > max_cond:
                raise SolverError("eigenvector basis too ill-conditioned for modal evaluation")
            self.mu, self.V, self.Vinv = mu, V, np.linalg.inv(V)

    def evolve_many(self, taus, u):
        c = self.Vinv @ np.asarray(u).ravel()
        return (self.V @ (np.exp(-np.outer(self.mu, taus)) * c[:, None])).T


def sample_solution(P: Propagator, u0, times, s=0.0, gradients=True):
    """Sample u(t) = Gamma(t, s) u0 at increasing ``times`` (each >= s)."""
    from .norms import SpaceTimeField

    times = np.asarray(times, dtype=float)
    u0 = np.asarray(u0, dtype=np.complex128)
    slices = np.empty((len(times),) + P.grid.shape, dtype=np.complex128)
    cur_t, cur = s, u0
    for i, t in enumerate(times):
        cur = P.apply(t, cur_t, cur)
        cur_t = t
        slices[i] = cur
    grads = None
    if gradients:
        grads = np.stack([discrete_gradient(P.grid, u) for u in slices])
    return SpaceTimeField(P.grid, times, slices, grads)


def dissipation_integrals(P: Propagator, u0, T=None, tol=1e-12):
    """Time integrals of 2 Re<A grad u, grad u> and ||grad u||^2 over [0, T].

    Each piece is integrated with graded Gauss-Legendre panels; the solution
    at the nodes comes from the eigen-decomposition of the frozen operator,
    started from the propagator value at the piece start.
    Returns ``(dissipation, gradient_sq, u_T)``.
    """
    grid = P.grid
    T = P.T if T is None else T
    G = gradient_matrix(grid)
    diss = grad = 0.0
    t0 = 0.0
    u = np.asarray(u0, dtype=np.complex128).ravel()
    for k, tau in P.path(T, 0.0):
        op = P.operators[k]
        modal = ModalPiece(op)
        flux = op.flux_matrix

        def forms(sigma, modal=modal, u=u, flux=flux):
            U = modal.evolve_many(np.atleast_1d(sigma), u)
            gu = (G @ U.T)
            energy = np.real(np.sum(np.conj(gu) * (flux @ gu), axis=0)) * grid.cell_volume
            gsq = np.sum(np.abs(gu) ** 2, axis=0) * grid.cell_volume
            return np.stack([energy, gsq], axis=1)

        val, _ = graded_gauss(forms, 0.0, tau, op.norm_bound, tol)
        diss += 2.0 * val[0]
        grad += val[1]
        u = P.apply(t0 + tau, t0, u.reshape(grid.shape)).ravel()
        t0 += tau
    return diss, grad, u.reshape(grid.shape)
