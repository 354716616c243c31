"""Periodic grids on the torus and the forward-difference gradient/divergence pair.

Scalar fields are numpy arrays of shape ``grid.shape``; vector fields carry a
leading component axis, shape ``(dim,) + grid.shape``. Component ``j`` of the
gradient differences along array axis ``j``. Cells are ordered row-major and
the center of cell ``i`` sits at ``i * spacing``.

The divergence is built as the exact negative adjoint of the gradient for the
inner product ``<u, v> = h^dim * sum(u * conj(v))``, so
``<grad u, F> = -<u, div F>`` holds to round-off.
"""

from dataclasses import dataclass
from functools import cached_property

import numpy as np


@dataclass(frozen=True)
class Grid:
    dim: int
    n: int
    period: float

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"unsupported dimension {self.dim}; expected 1 or 2")
        if int(self.n) != self.n or self.n < 4:
            raise ValueError(f"points_per_axis must be an integer >= 4, got {self.n}")
        if not self.period > 0:
            raise ValueError(f"period must be positive, got {self.period}")

    @property
    def spacing(self):
        return self.period / self.n

    @property
    def shape(self):
        return (self.n,) * self.dim

    @property
    def cells(self):
        return self.n**self.dim

    @property
    def cell_volume(self):
        return self.spacing**self.dim

    @property
    def volume(self):
        return self.period**self.dim

    @cached_property
    def coordinates(self):
        """Cell-center coordinates, shape ``(dim,) + shape``."""
        axis = np.arange(self.n) * self.spacing
        return np.stack(np.meshgrid(*([axis] * self.dim), indexing="ij"))

    def unravel(self, cell):
        if np.ndim(cell) == 0:
            return np.unravel_index(int(cell), self.shape)
        return tuple(int(c) % self.n for c in cell)

    def ravel(self, index):
        return int(np.ravel_multi_index(tuple(int(i) % self.n for i in index), self.shape))

    def wrapped_distance(self, cell):
        """Wrapped Euclidean distance from ``cell``'s center to every cell center."""
        center = self.unravel(cell)
        sq = np.zeros(self.shape)
        for j in range(self.dim):
            k = (np.arange(self.n) - center[j]) % self.n
            dj = np.minimum(k, self.n - k) * self.spacing
            shape = [1] * self.dim
            shape[j] = self.n
            sq = sq + dj.reshape(shape) ** 2
        return np.sqrt(sq)

    def inner(self, u, v):
        return complex(np.vdot(np.asarray(v), np.asarray(u))) * self.cell_volume

    def norm(self, u):
        return float(np.sqrt(np.sum(np.abs(u) ** 2) * self.cell_volume))

    def __repr__(self):
        return f"Grid(dim={self.dim}, n={self.n}, period={self.period})"


def build_grid(dim, points_per_axis, period):
    return Grid(int(dim), int(points_per_axis), float(period))


def discrete_gradient(grid, u):
    u = np.asarray(u)
    if u.shape != grid.shape:
        raise ValueError(f"expected scalar field of shape {grid.shape}, got {u.shape}")
    h = grid.spacing
    return np.stack([(np.roll(u, -1, axis=j) - u) / h for j in range(grid.dim)])


def discrete_divergence(grid, F):
    F = np.asarray(F)
    if F.shape != (grid.dim,) + grid.shape:
        raise ValueError(
            f"expected vector field of shape {(grid.dim,) + grid.shape}, got {F.shape}"
        )
    h = grid.spacing
    return sum((F[j] - np.roll(F[j], 1, axis=j)) / h for j in range(grid.dim))


def gradient_matrix(grid):
    """Sparse matrix of :func:`discrete_gradient` acting on flattened fields.

    Rows are ordered component-major: ``dim`` blocks of ``cells`` rows.
    """
    import scipy.sparse as sp

    n, h = grid.n, grid.spacing
    eye = sp.identity(n, format="csr")
    shift = sp.csr_matrix((np.ones(n), (np.arange(n), (np.arange(n) + 1) % n)), shape=(n, n))
    d1 = (shift - eye) / h
    if grid.dim == 1:
        return d1.tocsr()
    return sp.vstack([sp.kron(d1, eye), sp.kron(eye, d1)]).tocsr()


def ball_offsets(grid, radius):
    """Offsets (mod n) of all cells within wrapped distance < radius of a center.

    Always contains the zero offset. Returned as an int array ``(m, dim)``.
    """
    if not radius > 0:
        raise ValueError("radius must be positive")
    mask = grid.wrapped_distance(0) < radius
    mask.flat[0] = True
    return np.argwhere(mask).astype(np.int_)


def parabolic_ball(grid, center_cell, radius):
    """Flat indices of cells within wrapped distance < radius of ``center_cell``."""
    center = np.asarray(grid.unravel(center_cell))
    offs = ball_offsets(grid, radius)
    idx = (offs + center) % grid.n
    flat = np.ravel_multi_index(tuple(idx.T), grid.shape)
    return np.sort(flat)


def set_distance(grid, E, F):
    """Wrapped distance between two cell sets (flat indices), min over pairs."""
    E = np.atleast_1d(np.asarray(E))
    F = np.atleast_1d(np.asarray(F))
    best = np.full(grid.shape, np.inf)
    for f in F:
        np.minimum(best, grid.wrapped_distance(int(f)), out=best)
    return float(best.ravel()[E].min())
