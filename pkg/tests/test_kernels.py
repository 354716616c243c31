import itertools

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from propalab import kernels
from propalab.evolve import DiscreteOperator
from propalab.grid import Grid, ball_offsets

from conftest import crandn


def brute_sum(v, offs, n):
    out = np.zeros_like(v)
    for c in itertools.product(range(n), repeat=offs.shape[1]):
        for o in offs:
            out[(...,) + c] += v[(...,) + tuple((ci + oi) % n for ci, oi in zip(c, o))]
    return out


def brute_max(v, offs, n):
    out = np.full_like(v, -np.inf)
    for y in itertools.product(range(n), repeat=offs.shape[1]):
        for o in offs:
            out[(...,) + y] = np.maximum(out[(...,) + y],
                                         v[(...,) + tuple((yi - oi) % n for yi, oi in zip(y, o))])
    return out


def test_backend_selection_roundtrip():
    prev = kernels.use_backend("python")
    assert kernels.BACKEND == "python"
    kernels.use_backend(prev)
    with pytest.raises(ValueError):
        kernels.use_backend("fortran")


@pytest.mark.parametrize("dim,n,radius", [(1, 16, 2.5), (1, 9, 9.0), (2, 8, 2.2), (2, 6, 5.0)])
def test_ball_reductions_match_bruteforce(backend, dim, n, radius, rng):
    g = Grid(dim, n, float(n))
    offs = ball_offsets(g, radius)
    v = rng.random((3,) + g.shape)
    np.testing.assert_allclose(kernels.ball_sum(v, offs), brute_sum(v, offs, n), rtol=1e-13)
    np.testing.assert_array_equal(kernels.ball_max(v, offs), brute_max(v, offs, n))


@given(seed=st.integers(0, 2**31), dim=st.sampled_from([1, 2]), n=st.integers(4, 9),
       count=st.integers(1, 12))
def test_arbitrary_offsets_including_repeats(seed, dim, n, count):
    rng = np.random.default_rng(seed)
    offs = rng.integers(0, n, size=(count, dim))
    v = rng.standard_normal((2,) + (n,) * dim)
    for name in kernels.available_backends():
        prev = kernels.use_backend(name)
        try:
            np.testing.assert_allclose(kernels.ball_sum(v, offs), brute_sum(v, offs, n), atol=1e-12)
            np.testing.assert_array_equal(kernels.ball_max(v, offs), brute_max(v, offs, n))
        finally:
            kernels.use_backend(prev)


def test_batch_axes_preserved(backend, rng):
    g = Grid(1, 8, 8.0)
    offs = ball_offsets(g, 1.5)
    v = rng.random((2, 3, 8))
    out = kernels.ball_sum(v, offs)
    assert out.shape == v.shape
    np.testing.assert_allclose(out[1, 2], kernels.ball_sum(v[1, 2], offs))


@pytest.mark.parametrize("dim", [1, 2])
def test_divergence_form_matches_assembled_matrix(backend, dim, rng):
    g = Grid(dim, 8, 3.0)
    coeff = crandn(rng, g.shape + (dim, dim)) + 3 * np.eye(dim)
    L = DiscreteOperator(g, coeff)
    u = crandn(rng, (2,) + g.shape)
    got = kernels.divergence_form(u, coeff, g.spacing)
    for b in range(2):
        np.testing.assert_allclose(got[b].ravel(), L.matrix @ u[b].ravel(), rtol=1e-12, atol=1e-10)


def test_backends_agree_on_large_ball():
    if len(kernels.available_backends()) < 2:
        pytest.skip("compiled backend not built")
    rng = np.random.default_rng(3)
    g = Grid(2, 48, 48.0)
    offs = ball_offsets(g, 7.3)
    v = rng.random((4,) + g.shape)
    res = {}
    for name in ("python", "cython"):
        prev = kernels.use_backend(name)
        res[name] = (kernels.ball_sum(v, offs), kernels.ball_max(v, offs))
        kernels.use_backend(prev)
    np.testing.assert_allclose(res["python"][0], res["cython"][0], rtol=1e-12)
    np.testing.assert_array_equal(res["python"][1], res["cython"][1])
