import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from propalab.coeffs import make_scenario
from propalab.evolve import Propagator, sample_solution
from propalab.grid import Grid, discrete_divergence
from propalab.norms import (
    NormConfig,
    NormReport,
    SpaceTimeField,
    bochner_norms,
    carleson_functional,
    gradient_symbol_sq,
    hneg1_seminorm,
    kp_maximal,
    l2l2_norm,
    lebesgue_norm,
    slice_norm,
    tent_norm,
    xp_norm,
)
from propalab.quadrature import slice_integral

from conftest import crandn


def const_field(grid, times, value=1.0, vector=False):
    shape = ((grid.dim,) if vector else ()) + grid.shape
    return SpaceTimeField(grid, times, np.full((len(times),) + shape, value, dtype=complex))


def random_field(grid, times, seed, vector=False):
    rng = np.random.default_rng(seed)
    shape = (len(times),) + ((grid.dim,) if vector else ()) + grid.shape
    return SpaceTimeField(grid, times, crandn(rng, shape))


# -- Lebesgue and Bochner ------------------------------------------------------------

def test_lebesgue_examples(rng):
    g = Grid(1, 16, 1.0)
    assert lebesgue_norm(g, np.ones(g.shape), 2) == pytest.approx(1.0, abs=1e-15)
    assert lebesgue_norm(g, np.zeros(g.shape), 3) == 0.0
    f = crandn(rng, g.shape)
    assert lebesgue_norm(g, f, 2) ** 2 == pytest.approx(g.inner(f, f).real, rel=1e-13)
    assert lebesgue_norm(g, f, math.inf) == np.abs(f).max()
    with pytest.raises(ValueError):
        lebesgue_norm(g, f, 0.5)


def test_bochner_decaying_samples(rng):
    g = Grid(1, 16, 1.0)
    f = crandn(rng, g.shape)
    f /= lebesgue_norm(g, f, 2)
    ts = np.linspace(0.1, 1.0, 10)
    u = SpaceTimeField(g, ts, np.exp(-ts)[:, None] * f)
    rep = bochner_norms(u, p_list=(2,), gradient=False)
    assert rep.values["Linf_L2"] == pytest.approx(math.exp(-0.1), rel=1e-13)
    assert rep.values["Linf_L2"] == pytest.approx(rep.values["Linf_L2"])


def test_bochner_constant():
    g = Grid(2, 8, 1.0)
    ts = np.linspace(0, 1, 5)
    u = SpaceTimeField(g, ts, np.ones((5,) + g.shape), np.zeros((5, 2) + g.shape))
    rep = bochner_norms(u)
    assert rep.values["Linf_L2"] == pytest.approx(1.0)
    assert rep.values["grad_L2L2"] == 0.0


def test_bochner_heat_mode_closed_form():
    g = Grid(1, 32, 2.0)
    k = 3
    u0 = np.exp(2j * np.pi * k * g.coordinates[0] / g.period)
    mu = gradient_symbol_sq(g)[k]
    T = 0.2
    ts = np.linspace(0.0, T, 801)
    u = sample_solution(Propagator(make_scenario("heat", g, {"T": T}), "exact_expm"), u0, ts)
    got = bochner_norms(u).values["grad_L2L2_sq"]
    expected = (1 - math.exp(-2 * mu * T)) * lebesgue_norm(g, u0, 2) ** 2 * mu / (2 * mu)
    assert got == pytest.approx(expected, rel=1e-6)


def test_bochner_errors():
    g = Grid(1, 8, 1.0)
    with pytest.raises(ValueError):
        bochner_norms(const_field(g, [0.5]))
    with pytest.raises(ValueError):
        bochner_norms(const_field(g, [0.1, 0.5]), gradient=True)


def test_field_validation():
    g = Grid(1, 8, 1.0)
    with pytest.raises(ValueError):
        SpaceTimeField(g, [0.2, 0.1], np.ones((2, 8)))
    with pytest.raises(ValueError):
        SpaceTimeField(g, [0.1], np.ones((2, 8)))
    with pytest.raises(ValueError):
        SpaceTimeField(g, [0.1], np.full((1, 8), np.inf))
    with pytest.raises(ValueError):
        SpaceTimeField(g, [0.1], np.ones((1, 8)), np.ones((1, 2, 8)))


def test_norm_report_validation():
    with pytest.raises(ValueError):
        NormReport({"x": -1.0})
    with pytest.raises(ValueError):
        NormReport({"x": math.nan})
    assert NormReport({"x": 2.0}, {"x": "u"}).to_dict() == {"values": {"x": 2.0}, "provenance": {"x": "u"}}


def test_norm_config():
    cfg = NormConfig(T=1.0)
    assert cfg.t_min == 2.0**-16
    assert all(cfg.t_min <= d / 2 and d <= cfg.T for d in cfg.delta_grid)
    with pytest.raises(ValueError):
        NormConfig(T=1.0, t_min=2.0)
    with pytest.raises(ValueError):
        NormConfig(T=1.0, p=0.5)


# -- tent space -------------------------------------------------------------------

def test_tent_of_zero_and_one():
    g = Grid(1, 16, 2.0)
    ts = np.linspace(0.0, 1.0, 33)
    cfg = NormConfig(T=1.0, t_min=0.01)
    assert tent_norm(const_field(g, ts, 0.0), 2, cfg) == 0.0
    for p in (1, 2, 3):
        assert tent_norm(const_field(g, ts), p, cfg) == pytest.approx(math.sqrt(0.99) * 2.0 ** (1 / p), rel=1e-13)


@pytest.mark.parametrize("dim", [1, 2])
@pytest.mark.parametrize("seed", range(3))
def test_tent_two_equals_l2l2(dim, seed, backend):
    g = Grid(dim, 8 if dim == 2 else 32, 4.0)
    ts = np.concatenate([[0.0], np.geomspace(1e-3, 1.0, 20)])
    F = random_field(g, ts, seed, vector=True)
    cfg = NormConfig(T=1.0, t_min=2e-3)
    assert tent_norm(F, 2, cfg) == pytest.approx(l2l2_norm(F, cfg.t_min, cfg.T), rel=1e-12)


def test_tent_monotone_in_truncation():
    g = Grid(1, 16, 2.0)
    ts = np.linspace(0.0, 1.0, 17)
    F = random_field(g, ts, 1)
    a = tent_norm(F, 1, NormConfig(T=1.0, t_min=0.2))
    b = tent_norm(F, 1, NormConfig(T=1.0, t_min=0.05))
    assert b >= a


# magnitudes stay clear of the range where |F|^2 underflows
@given(c=st.just(0j) | st.complex_numbers(min_magnitude=1e-100, max_magnitude=1e100,
                                          allow_nan=False, allow_infinity=False),
       seed=st.integers(0, 99))
def test_homogeneity(c, seed):
    g = Grid(1, 16, 2.0)
    ts = np.linspace(0.0, 1.0, 9)
    F = random_field(g, ts, seed)
    cfg = NormConfig(T=1.0, t_min=0.1)
    for fn in (lambda G: tent_norm(G, 1.5, cfg), lambda G: tent_norm(G, math.inf, cfg),
               lambda G: xp_norm(G, 3, cfg), lambda G: l2l2_norm(G, 0.1, 1.0)):
        assert fn(F.scaled(c)) == pytest.approx(abs(c) * fn(F), rel=1e-12, abs=1e-300)


# -- Kenig-Pipher maximal function ---------------------------------------------------

def test_kp_of_constant():
    g = Grid(2, 8, 4.0)
    F = const_field(g, np.linspace(0.0, 1.0, 17), 2.0 - 1.0j)
    cfg = NormConfig(T=1.0, t_min=0.05)
    np.testing.assert_allclose(kp_maximal(F, cfg), abs(2 - 1j), rtol=1e-13)


def test_kp_monotone(rng):
    g = Grid(1, 16, 2.0)
    ts = np.linspace(0.0, 1.0, 33)
    G = random_field(g, ts, 4)
    F = SpaceTimeField(g, ts, G.slices * rng.uniform(0, 1, G.slices.shape))
    cfg = NormConfig(T=1.0, t_min=0.05)
    assert np.all(kp_maximal(F, cfg) <= kp_maximal(G, cfg) + 1e-15)


def _brute_fraction(g, center, radius, S):
    """#(B(center, radius) intersected with S) / #B(center, radius), by explicit loops."""
    inside = hits = 0
    for c in itertools.product(range(g.n), repeat=g.dim):
        d = math.sqrt(sum(min((a - b) % g.n, (b - a) % g.n) ** 2 for a, b in zip(c, center))) * g.spacing
        if d < radius:
            inside += 1
            hits += c in S
    return hits / inside


@pytest.mark.parametrize("dim", [1, 2])
def test_kp_indicator_bruteforce(dim, backend):
    g = Grid(dim, 12 if dim == 2 else 32, 4.0)
    cfg = NormConfig(T=1.0, t_min=1 / 64)
    ts = np.linspace(0.0, 1.0, 65)
    delta0 = cfg.delta_grid[2]
    x0 = (3,) * dim
    S = {c for c in itertools.product(range(g.n), repeat=dim)
         if math.sqrt(sum(min((a - b) % g.n, (b - a) % g.n) ** 2 for a, b in zip(c, x0))) * g.spacing < math.sqrt(delta0)}
    ind = np.zeros(g.shape)
    for c in S:
        ind[c] = 1.0
    F = SpaceTimeField(g, ts, np.broadcast_to(ind, (len(ts),) + g.shape))
    got = kp_maximal(F, cfg)
    for c in itertools.product(range(g.n), repeat=dim):
        best = max(_brute_fraction(g, c, math.sqrt(d), S) for d in cfg.delta_grid)
        assert got[c] == pytest.approx(math.sqrt(best), abs=1e-14)


def test_kp_requires_slices_in_every_window():
    g = Grid(1, 8, 2.0)
    F = const_field(g, [0.9, 1.0])
    with pytest.raises(ValueError):
        kp_maximal(F, NormConfig(T=1.0, t_min=0.01))


# -- Carleson --------------------------------------------------------------------------

def test_carleson_of_zero_and_one():
    g = Grid(1, 32, 4.0)
    ts = np.linspace(0.0, 1.0, 65)
    cfg = NormConfig(T=1.0, t_min=1 / 64)
    assert np.abs(carleson_functional(const_field(g, ts, 0.0), cfg)).max() == 0.0
    r_max = max(cfg.radius_set)
    expected = math.sqrt(min(cfg.T, r_max**2) - cfg.t_min)
    np.testing.assert_allclose(carleson_functional(const_field(g, ts), cfg), expected, rtol=1e-12)


def test_carleson_indicator_bruteforce(backend):
    g = Grid(1, 32, 4.0)
    cfg = NormConfig(T=1.0, t_min=1 / 64)
    ts = np.linspace(0.0, 1.0, 65)
    S = {(c,) for c in range(5, 9)}
    ind = np.zeros(g.shape)
    for c in S:
        ind[c] = 1.0
    F = SpaceTimeField(g, ts, np.broadcast_to(ind, (len(ts),) + g.shape))
    got = carleson_functional(F, cfg)
    for y in range(g.n):
        best = 0.0
        for r in cfg.radius_set:
            for c in range(g.n):
                d = min((c - y) % g.n, (y - c) % g.n) * g.spacing
                if d < r:
                    best = max(best, max(0.0, min(r * r, cfg.T) - cfg.t_min) * _brute_fraction(g, (c,), r, S))
        assert got[y] == pytest.approx(math.sqrt(best), abs=1e-13)


# -- slice spaces ---------------------------------------------------------------------

def test_slice_norm_of_one():
    g = Grid(2, 8, 2.0)
    for p in (1, 2, 4):
        assert slice_norm(g, np.ones(g.shape), p, 0.3) == pytest.approx(2.0 ** (2 / p), rel=1e-13)
    with pytest.raises(ValueError):
        slice_norm(g, np.ones(g.shape), 2, 0.0)


@pytest.mark.parametrize("delta", [0.01, 0.1, 1.0, 10.0])
def test_slice_two_equals_l2(delta, rng, backend):
    g = Grid(2, 10, 3.0)
    f = crandn(rng, g.shape)
    assert slice_norm(g, f, 2, delta) == pytest.approx(lebesgue_norm(g, f, 2), rel=1e-12)


@pytest.mark.parametrize("p", [1, 1.5, 4, math.inf])
@pytest.mark.parametrize("dim", [1, 2])
def test_slice_rescaling_bracket(p, dim):
    g = Grid(dim, 16 if dim == 2 else 64, 8.0)
    n = dim
    rng = np.random.default_rng(11)
    delta = 0.25
    e = 0.5 * (n / 2 - (0 if math.isinf(p) else n / p))
    lo, hi = min(1.0, 4.0**e) / 4, 4 * max(1.0, 4.0**e)
    for _ in range(5):
        f = crandn(rng, g.shape)
        ratio = slice_norm(g, f, p, delta) / slice_norm(g, f, p, 4 * delta)
        assert lo <= ratio <= hi


# -- H^{-1} ---------------------------------------------------------------------------

def test_hneg1_zero_and_mode():
    g = Grid(1, 16, 2.0)
    assert hneg1_seminorm(g, np.zeros(g.shape)) == 0.0
    k = 3
    f = np.exp(2j * np.pi * k * g.coordinates[0] / g.period)
    sigma = math.sqrt(gradient_symbol_sq(g)[k])
    assert hneg1_seminorm(g, f) == pytest.approx(lebesgue_norm(g, f, 2) / sigma, rel=1e-13)


@pytest.mark.parametrize("dim", [1, 2])
def test_hneg1_infimum_bound(dim, rng):
    g = Grid(dim, 8, 3.0)
    for _ in range(10):
        G = crandn(rng, (dim,) + g.shape)
        f = discrete_divergence(g, G)
        assert hneg1_seminorm(g, f) <= lebesgue_norm(g, np.sqrt((np.abs(G) ** 2).sum(0)), 2) + 1e-12


def test_hneg1_minimiser_attains(rng):
    # the minimal-norm g is -grad of the inverse Laplacian of f; compare with a dense least-squares solve
    g = Grid(2, 6, 2.0)
    f = crandn(rng, g.shape)
    f -= f.mean()
    from propalab.grid import gradient_matrix
    D = -gradient_matrix(g).toarray().T
    sol = np.linalg.lstsq(D, f.ravel(), rcond=None)[0]
    assert hneg1_seminorm(g, f) == pytest.approx(np.linalg.norm(sol) * math.sqrt(g.cell_volume), rel=1e-10)


def test_hneg1_reports_mean():
    g = Grid(1, 8, 1.0)
    val, mean = hneg1_seminorm(g, np.full(g.shape, 2.0), return_mean=True)
    assert val == 0.0 and mean == 2.0


def test_slice_integral_matches_trapezoid():
    ts = np.array([0.0, 0.5, 1.0])
    vals = np.array([0.0, 1.0, 0.0])
    assert slice_integral(ts, vals, 0.0, 1.0) == pytest.approx(0.5)
    assert slice_integral(ts, vals, 0.25, 0.5) == pytest.approx(0.5 * 0.25 * (0.5 + 1.0))
