"""Check registry and the default inputs each check derives from a run context.

Every datum used here is a fixed continuum function sampled on the grid
(smooth trigonometric polynomials, steps at physical positions), so a context
rebuilt at another resolution describes the same problem. Refinement checks
compare the configured grid with the one at half the resolution.
"""

import math
from dataclasses import dataclass, field, replace
from functools import cached_property

import numpy as np

from ..coeffs import make_scenario, smooth_random_field
from ..evolve import Propagator, Scheme
from ..grid import Grid
from ..norms import NormConfig
from . import checks as C


@dataclass(frozen=True)
class RunContext:
    grid: Grid
    scenario: str
    params: dict
    seed: int
    scheme: Scheme
    T: float
    norm_options: dict = field(default_factory=dict)

    @cached_property
    def A(self):
        params = {"T": self.T, "seed": self.seed, **self.params}
        return make_scenario(self.scenario, self.grid, params)

    @cached_property
    def P(self):
        return Propagator(self.A, self.scheme)

    def at_resolution(self, n):
        return replace(self, grid=Grid(self.grid.dim, n, self.grid.period))

    def coarse(self):
        n = self.grid.n // 2
        if n < 4:
            raise ValueError("grid too coarse for a refinement comparison")
        return self.at_resolution(n)

    def norm_config(self):
        o = self.norm_options
        return NormConfig(T=self.T, t_min=o.get("t_min", self.T * 2.0**-8),
                          delta_levels=o.get("delta_levels"))

    @property
    def p_list(self):
        return tuple(math.inf if p == "inf" else float(p)
                     for p in self.norm_options.get("p", [1, 2, 4, "inf"]))


# -- continuum data ----------------------------------------------------------------

def smooth_mean_zero(grid, seed, modes=3):
    f = smooth_random_field(grid, 7919 + seed, modes=modes)
    return f - f.mean()


def fourier_mode(grid, k=1):
    return np.exp(2j * np.pi * k * grid.coordinates[0] / grid.period)


def step(grid, lo, hi):
    """Indicator of lo <= x_1 < hi (physical coordinates)."""
    x = grid.coordinates[0]
    return ((x >= lo - 1e-12) & (x < hi - 1e-12)).astype(float)


def datum(ctx, kind="smooth"):
    g = ctx.grid
    if kind == "smooth":
        return smooth_mean_zero(g, ctx.seed)
    if kind == "mode":
        return fourier_mode(g)
    if kind == "step":
        return step(g, g.period / 8, 5 * g.period / 8)
    raise ValueError(f"unknown datum {kind!r}")


def physical_cells(grid, fractions):
    """Cells at the given fractions of the period along every axis."""
    return [grid.ravel([round(f * grid.n) % grid.n] * grid.dim) for f in fractions]


# -- runners ------------------------------------------------------------------------

def run_contraction(ctx, tolerance=1e-10):
    return C.check_contraction(ctx.P, tolerance=tolerance)


def run_conservation(ctx, tolerance=1e-10):
    return C.check_conservation(ctx.P, tolerance=tolerance)


def run_offdiagonal(ctx, ratios=(1, 4, 9, 16, 25), tau=None, s=0.0):
    g = ctx.grid
    tau = tau if tau is not None else min(ctx.T - s, (g.period / 16) ** 2)
    cases = []
    for ratio in ratios:
        E, F = C.separated_sets(g, math.sqrt(ratio * tau))
        cases.append((f"d2/tau={ratio:g}", E, F, s + tau, s))
    return C.check_offdiagonal(ctx.P, cases=cases)


def run_norm_equivalence(ctx, data="smooth", tolerance=0.02, decay=1e-6):
    return C.check_norm_equivalence(ctx.P, datum(ctx, data), decay=decay, tolerance=tolerance)


def run_energy(ctx, data="smooth", tolerance=1e-7):
    return C.check_energy_equality(ctx.P, datum(ctx, data), tolerance=tolerance)


def run_interior_representation(ctx, data="smooth", tolerance=1e-10):
    T = ctx.T
    u0 = datum(ctx, data)
    times = np.linspace(0.0, T, 5)
    traj = C.sample_solution(ctx.P, u0, times, gradients=False)
    report = C.check_interior_representation(ctx.P, traj, T / 4, 3 * T / 4, tolerance=tolerance)
    if ctx.scheme.kind == "exact_expm":
        other = Propagator(ctx.A, Scheme("crank_nicolson"))
        cross = C.check_interior_representation(
            ctx.P, C.sample_solution(other, u0, times, gradients=False), T / 4, 3 * T / 4
        )
        report.details["cross_scheme_residual"] = cross.measured["pairing_residual"]
    return report


def run_reverse_holder(ctx, data="step", tolerance=0.30, fractions=(0.5, 0.95)):
    coarse = ctx.coarse()
    sample = {"fractions": tuple(fractions)}
    return C.check_reverse_holder(ctx.P, datum(ctx, data), sample,
                                  reference=(coarse.P, datum(coarse, data)), tolerance=tolerance)


def run_local_energy(ctx, data="step"):
    T, g = ctx.T, ctx.grid
    a, b = T / 4, T
    cyl = (a, b, (a + b) / 2, g.period / 8)
    centers = physical_cells(g, (0.0, 0.125, 0.3, 0.6))
    return C.check_local_energy(ctx.P, datum(ctx, data), cyl, centers=centers)


def run_max_square(ctx, data="smooth", tolerance=0.30):
    coarse = ctx.coarse()
    return C.check_max_square(ctx.P, datum(ctx, data), ps=ctx.p_list, cfg=ctx.norm_config(),
                              reference=(coarse.P, datum(coarse, data)), tolerance=tolerance)


def run_struct_bound(ctx, data="smooth", tolerance=0.05, per_octave=16, octaves=24, decay=1e-6):
    P = ctx.P
    horizon = max(ctx.T, C.decay_horizon(P, decay))
    Pe = C.extend_propagator(P, horizon)
    times = np.concatenate([[0.0], horizon * 2.0 ** (-np.arange(octaves * per_octave, -1, -1) / per_octave)])
    traj, dudt = C.struct_trajectory(Pe, datum(ctx, data), times)
    ell = P.A.ellipticity
    return C.check_struct_bound(traj, dudt, ell.lower, ell.upper, tolerance=tolerance)


def run_whitney_fatou(ctx, data="step", levels=None, noise=0.10, final_factor=1e-3):
    g = ctx.grid
    if levels is None:
        # smallest Whitney ball radius still spans four cells
        levels = max(1, int(math.floor(math.log2(ctx.T / (4 * g.spacing) ** 2))))
    u0 = datum(ctx, data)
    room = float(C.jump_distance(g, u0).max())
    deltas = [ctx.T * 2.0**-j for j in range(levels + 1)]
    # start where some cell lies beyond the 4 sqrt(delta) exclusion zone
    deltas = [d for d in deltas if 4 * math.sqrt(d) < 0.75 * room] if math.isfinite(room) else deltas
    return C.check_whitney_fatou(ctx.P, u0, deltas, noise=noise, final_factor=final_factor)


# default BV family: Re A fixed, jumps along i * s(x), far enough from the real
# axis that the l^p norms exceed 1 (otherwise every norm is exactly 1)
BV_FAMILY = {"base": 0.3, "base_imag": 1.5, "complex": False, "jump_phase": math.pi / 2}


def run_bv_uniformity(ctx, p=1.5, budget=0.5, jump_counts=(1, 2, 4, 8, 16),
                      budgets=(0.0, 0.25, 0.5, 1.0), budget_jumps=4, tolerance=0.10):
    base = {"T": ctx.T, "seed": ctx.seed, **BV_FAMILY}
    if ctx.scenario == "bv_staircase":
        base.update({k: v for k, v in ctx.params.items() if k in BV_FAMILY or k == "modes"})

    def prop(b, K):
        params = {**base, "budget": b, "jump_count": K}
        return Propagator(make_scenario("bv_staircase", ctx.grid, params), ctx.scheme)

    family = {K: prop(budget, K) for K in jump_counts}
    growth = {b: prop(b, budget_jumps) for b in budgets}
    return C.check_bv_uniformity(family, p=p, budgets=growth, tolerance=tolerance)


def run_kernel_gaussian(ctx, taus=None, sources=(0.0, 0.3, 0.55), tolerance=0.30):
    g = ctx.grid
    if not ctx.A.is_real_scalar():
        return C.check_kernel_gaussian(ctx.P, (), ())
    if taus is None:
        top = min(ctx.T, g.period**2 / 120)
        taus = (top / 4, top / 2, top)
    coarse = ctx.coarse()
    return C.check_kernel_gaussian(ctx.P, tuple(taus), physical_cells(g, sources),
                                   reference=coarse.P, tolerance=tolerance)


@dataclass(frozen=True)
class CheckSpec:
    run: object
    anchor: str
    tolerance: str
    needs_torus_room: bool = False

    @property
    def function(self):
        """Name of the check function in :mod:`propalab.verify.checks` the runner calls."""
        name = self.run.__name__.replace("run_", "check_", 1)
        return "check_energy_equality" if name == "check_energy" else name


CHECKS = {
    "bv_uniformity": CheckSpec(
        run_bv_uniformity,
        "sup ||Gamma(t,s)||_{L(L^p)} < inf; ||grad w_k|| <= prod(1 + C||A_{j+1} - A_j||_inf) <= e^{C||A||_{BV(L^inf)}}",
        "10% across jump counts",
    ),
    "conservation": CheckSpec(run_conservation, "Gamma(t,s)1 = 1 and Gamma(t,s)^*1 = 1", "1e-10 absolute"),
    "contraction": CheckSpec(run_contraction, "||Gamma(t,s)||_{L^2 -> L^2} <= 1", "1e-10"),
    "energy": CheckSpec(
        run_energy, "||u_0||^2 = 2 Re int_0^T int A grad u . grad u + ||u(T)||^2", "1e-7 relative"
    ),
    "interior_representation": CheckSpec(
        run_interior_representation,
        "int u(s,x) Gamma(t,s)^*h(x) dx = int u(t,x) h(x) dx",
        "1e-10 relative",
    ),
    "kernel_gaussian": CheckSpec(
        run_kernel_gaussian,
        "|k(t,s,x,y)| <= C (t-s)^{-n/2} e^{-c|x-y|^2/4(t-s)}",
        "30% refinement change, c > 0",
    ),
    "local_energy": CheckSpec(
        run_local_energy,
        "(4 kappa^2 Lambda^2/(lambda r^2) + 1/(b-a)) int_a^b ||u||^2_{L2(B(x,2r))}",
        "exact inequality",
    ),
    "max_square": CheckSpec(
        run_max_square,
        "||u||_{X^p} <~ ||grad u||_{T^{p,2}} and ||grad u||_{T^{p,2}} <~ ||u||_{X^p}",
        "30% refinement change",
    ),
    "norm_equivalence": CheckSpec(
        run_norm_equivalence,
        "||u_0|| = ||u||_{L^inf(L^2)} <= sqrt(2 Lambda) ||grad u||_{L^2(L^2)} <= sqrt(Lambda/lambda) ||u_0||",
        "2%",
    ),
    "offdiagonal": CheckSpec(
        run_offdiagonal,
        "||1_E Gamma(t,s)(1_F f)|| <= e^{-alpha d(E,F)^2/(t-s)} ||f||, alpha=λ/4Λ²",
        "5% (dense), 15% (probing)",
        needs_torus_room=True,
    ),
    "reverse_holder": CheckSpec(
        run_reverse_holder,
        "q := 2 + 4/n; (avg_B |u|^q)^{1/q} <= C (avg_{4B} |u|^2)^{1/2}",
        "30% refinement change",
        needs_torus_room=True,
    ),
    "struct_bound": CheckSpec(
        run_struct_bound,
        "||v||_{L^inf(L^2)} <= sqrt(2 ||u||_{L^2(Hdot^1)} ||d_t u||_{L^2(Hdot^-1)})",
        "5%",
    ),
    "whitney_fatou": CheckSpec(
        run_whitney_fatou,
        "avg_{delta/2}^{delta} avg_{B(x,sqrt delta)} |u(t,y) - f(x)|^2 dy dt -> 0",
        "10% monotonicity noise, final error <= 1e-3 ||u_0||_inf",
    ),
}


def check_ids():
    return sorted(CHECKS)


def run_check(check_id, ctx, **overrides):
    if check_id not in CHECKS:
        raise KeyError(f"unknown check id {check_id!r}")
    return CHECKS[check_id].run(ctx, **overrides)
