import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from propalab.coeffs import (
    SCENARIOS,
    CoefficientField,
    EllipticityError,
    check_ellipticity,
    identity_pieces,
    make_scenario,
    matrix_bounds,
    random_elliptic_staircase,
    smooth_random_field,
    time_average_refine,
)
from propalab.grid import Grid

G1 = Grid(1, 8, 4.0)
G2 = Grid(2, 6, 4.0)


def const_field(grid, value, T=1.0):
    return CoefficientField(grid, np.array([0.0, T]), identity_pieces(grid, np.full((1,) + grid.shape, value)))


def test_identity_constants():
    e = check_ellipticity(const_field(G1, 1.0))
    assert (e.lower, e.upper, e.alpha, e.rh_exponent) == (1.0, 1.0, 0.25, 6.0)


def test_scaled_identity_constants():
    e = check_ellipticity(const_field(G1, 2.0))
    assert (e.lower, e.upper, e.alpha, e.rh_exponent) == (2.0, 2.0, 0.125, 6.0)


def test_complex_scalar_constants():
    e = check_ellipticity(const_field(G1, 1 + 0.5j))
    assert e.lower == pytest.approx(1.0, abs=1e-15)
    assert e.upper == pytest.approx(1.118033988749895, abs=1e-15)  # |1 + 0.5i|


def test_rh_exponent_in_2d():
    assert check_ellipticity(const_field(G2, 1.0)).rh_exponent == 4.0


def test_brute_force_matrix_bounds():
    # lambda: min over unit xi of Re<A xi, xi>; Lambda: max |<A xi, eta>|; sampled on a fine circle
    rng = np.random.default_rng(1)
    A = rng.standard_normal((2, 2)) + 1j * rng.standard_normal((2, 2)) + 3 * np.eye(2)
    th = np.linspace(0, 2 * np.pi, 721)
    ph = np.linspace(0, np.pi, 361)
    xs = np.stack([np.cos(ph)[:, None] * np.ones_like(th), np.sin(ph)[:, None] * np.exp(1j * th)], -1).reshape(-1, 2)
    quad = np.einsum("ki,ij,kj->k", xs.conj(), A, xs).real
    lam, Lam = matrix_bounds(A[None])
    assert lam == pytest.approx(quad.min(), abs=1e-4)
    assert lam <= quad.min() + 1e-12
    assert Lam == pytest.approx(np.linalg.norm(A, 2), rel=1e-14)


def test_non_elliptic_rejected():
    with pytest.raises(EllipticityError):
        check_ellipticity(const_field(G1, -0.1 + 1j))
    with pytest.raises(EllipticityError):
        make_scenario("complex_perturb", G1, {"eps": 1.5})
    with pytest.raises(EllipticityError):
        make_scenario("real_checkerboard", G1, {"lo": 0.0})


def test_field_validation():
    with pytest.raises(ValueError):
        CoefficientField(G1, np.array([0.0, 0.5, 0.4]), np.ones((2, 8, 1, 1)))
    with pytest.raises(ValueError):
        CoefficientField(G1, np.array([0.0, 1.0]), np.ones((1, 7, 1, 1)))
    with pytest.raises(ValueError):
        CoefficientField(G1, np.array([0.0, 1.0]), np.full((1, 8, 1, 1), np.nan))


def test_piece_lookup():
    A = make_scenario("complex_perturb", G1, {"pieces": 4})
    assert A.piece_index(0.0) == 0
    assert A.piece_index(0.25) == 1
    assert A.piece_index(1.0) == 3
    with pytest.raises(ValueError):
        A.piece_index(1.5)


def test_heat_scenario():
    A = make_scenario("heat", G2)
    e = A.ellipticity
    assert (e.lower, e.upper, A.bv) == (1.0, 1.0, 0.0)


def test_bv_of_explicit_jumps():
    A = make_scenario("bv_staircase", G1, {"jumps": [0.1, 0.2]})
    assert A.bv == pytest.approx(0.3, abs=1e-14)
    assert A.num_pieces == 3


def test_checkerboard_constants():
    A = make_scenario("real_checkerboard", Grid(1, 8, 8.0), {"lo": 0.5, "hi": 2.0})
    assert (A.ellipticity.lower, A.ellipticity.upper) == (0.5, 2.0)
    assert A.is_real_scalar()
    assert sorted(set(A.pieces[0, :, 0, 0].real)) == [0.5, 2.0]


@pytest.mark.parametrize("name", sorted(SCENARIOS))
@pytest.mark.parametrize("grid", [G1, G2], ids=["1d", "2d"])
def test_scenarios_deterministic(name, grid):
    a = make_scenario(name, grid, {"seed": 3})
    b = make_scenario(name, grid, {"seed": 3})
    np.testing.assert_array_equal(a.pieces, b.pieces)
    assert a.ellipticity.lower > 0


def test_unknown_scenario():
    with pytest.raises(ValueError, match="unknown scenario"):
        make_scenario("granite", G1)


@given(seed=st.integers(0, 10**6), dim=st.sampled_from([1, 2]))
def test_random_staircase_within_bounds(seed, dim):
    A = random_elliptic_staircase(Grid(dim, 8, 4.0), seed)
    assert A.ellipticity.lower >= 0.5 - 1e-12
    assert A.ellipticity.upper <= 2.0 + 1e-12


def test_smooth_field_resolution_independent():
    coarse, fine = Grid(1, 16, 4.0), Grid(1, 64, 4.0)
    f = smooth_random_field(coarse, 5)
    F = smooth_random_field(fine, 5)
    # same continuum function up to normalization by the sampled max
    ratio = F[::4] / f
    np.testing.assert_allclose(ratio, ratio[0], rtol=1e-12)


def test_adjoint_reversed_and_frozen():
    A = make_scenario("complex_perturb", G2, {"pieces": 3})
    R = A.adjoint_reversed()
    np.testing.assert_allclose(R.pieces[0], np.conj(np.swapaxes(A.pieces[-1], -1, -2)))
    np.testing.assert_allclose(R.breakpoints, A.breakpoints)
    F = A.frozen(1)
    assert F.num_pieces == 1 and F.T == A.T
    E = A.extended_to(3.0)
    assert E.T == 3.0 and E.piece_index(2.5) == 2
    with pytest.raises(ValueError):
        A.extended_to(0.5)


# -- time averaging --------------------------------------------------------------------

def test_average_of_linear_ramp():
    B = time_average_refine(lambda t: np.full(G1.shape, t), G1, 0, T=1.0)
    np.testing.assert_allclose(B.pieces[0, :, 0, 0], 0.5, atol=1e-14)


def test_aligned_staircase_unchanged():
    A = make_scenario("bv_staircase", G1, {"jumps": [0.2, 0.1, 0.3], "T": 1.0})
    B = time_average_refine(A, G1, 2)
    np.testing.assert_allclose(B.pieces, A.pieces, atol=1e-12)
    np.testing.assert_allclose(B.breakpoints, A.breakpoints)


@pytest.mark.parametrize("level", [0, 1, 2, 3])
def test_refinement_contracts_bv_and_keeps_ellipticity(level):
    A = make_scenario("bv_staircase", G2, {"jumps": [0.2, 0.4, 0.1, 0.3, 0.25], "T": 1.0, "seed": 2})
    B = time_average_refine(A, G2, level)
    assert B.bv <= A.bv + 1e-12
    assert B.ellipticity.lower >= A.ellipticity.lower - 1e-12


def test_refinement_converges_to_samples():
    lip = 2 * np.pi * 0.5
    def spec(t):
        return np.full(G1.shape, 1.5 + 0.5 * np.sin(2 * np.pi * t))
    for j in (2, 4, 6):
        B = time_average_refine(spec, G1, j, T=1.0)
        mids = 0.5 * (B.breakpoints[:-1] + B.breakpoints[1:])
        err = max(abs(B.pieces[k, 0, 0, 0] - spec(m)[0]) for k, m in enumerate(mids))
        assert err <= lip * 2.0**-j


def test_refine_requires_horizon():
    with pytest.raises(ValueError):
        time_average_refine(lambda t: np.ones(G1.shape), G1, 1)
    with pytest.raises(ValueError):
        time_average_refine(lambda t: np.ones(G1.shape), G1, -1, T=1.0)
