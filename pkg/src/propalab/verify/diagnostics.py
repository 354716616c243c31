"""Norm and maximal-regularity summaries attached to every run report.

These are reported quantities with declared tolerances rather than checks:
they feed the "norms" and "maxreg" sections of the JSON report.
"""

import math

import numpy as np

from ..evolve import DENSE_LIMIT, sample_solution
from ..maxreg import (
    AutonomousKit,
    apply_ML,
    apply_ML_tilde,
    apply_RL,
    estimate_operator_norm,
    gradient_of,
    random_probes,
)
from ..norms import (
    NormConfig,
    NormReport,
    SpaceTimeField,
    bochner_norms,
    l2l2_norm,
    lebesgue_norm,
    slice_norm,
    tent_norm,
    xp_norm,
)
from .checks import geometric_times

RVM_TOL = 1e-9
LINEARITY_TOL = 1e-11
REFINEMENT_TOL = 0.25
TENT_P = (1.0, 4.0 / 3.0, 2.0, 4.0)


def _pkey(p):
    return "inf" if math.isinf(p) else f"{p:g}"


def norm_summary(ctx, u0):
    """Norms of the solution from ``u0`` plus the two exact Fubini identities."""
    cfg = ctx.norm_config()
    P = ctx.P
    traj = sample_solution(P, u0, geometric_times(ctx.T, cfg.t_min))
    grad = traj.gradient_field()
    values, prov = {}, {}
    for p in ctx.p_list:
        k = _pkey(p)
        values[f"X^{k}(u)"] = xp_norm(traj, p, cfg)
        values[f"T^{k},2(grad u)"] = tent_norm(grad, p, cfg)
    values["L2L2(grad u)"] = l2l2_norm(grad, cfg.t_min, ctx.T)
    # T^{2,2} = L^2(L^2) and E^2_delta = L^2 hold exactly with cell-count averages
    values["|T^2,2 - L2L2|/L2L2"] = abs(tent_norm(grad, 2, cfg) - values["L2L2(grad u)"]) / values["L2L2(grad u)"]
    g = ctx.grid
    l2 = lebesgue_norm(g, u0, 2)
    values["|E^2_delta - L2|/L2"] = max(
        abs(slice_norm(g, u0, 2, d) - l2) / l2 for d in cfg.delta_grid
    )
    bo = bochner_norms(traj, p_list=ctx.p_list)
    values.update({f"bochner:{k}": v for k, v in bo.values.items()})
    for k in values:
        prov[k] = {"field": "grad u" if "grad" in k else "u",
                   "t_min": cfg.t_min, "T": ctx.T, "scales": len(cfg.delta_grid)}
    return NormReport(values, prov)


def _rel(a, b):
    scale = max(float(np.abs(b).max()), 1e-300)
    return float(np.abs(a - b).max()) / scale


def _ml_norm(ctx, probes):
    kit = AutonomousKit.from_field(ctx.A, 0)
    times = probes[0].times
    T = float(times[-1])
    return estimate_operator_norm(lambda f: apply_ML(kit, f),
                                  lambda f: l2l2_norm(f, 0.0, T),
                                  lambda f: l2l2_norm(f, 0.0, T), probes)


def _tent_ratios(ctx, probes):
    """Empirical T^{p,2} -> T^{p,2} (M~_L) and T^{p,2} -> X^p (R_L) lower bounds."""
    kit = AutonomousKit.from_field(ctx.A, 0)
    times = probes[0].times
    cfg = NormConfig(T=float(times[-1]), t_min=float(times[1]))
    out = {}
    for p in TENT_P:
        tent = lambda f, p=p: tent_norm(f, p, cfg)
        out[f"p={p:.4g}"] = {
            "ML_tilde_Tp2": estimate_operator_norm(lambda f: apply_ML_tilde(kit, f), tent, tent, probes),
            "RL_Tp2_to_Xp": estimate_operator_norm(lambda f: apply_RL(kit, f), tent,
                                                   lambda u, p=p: xp_norm(u, p, cfg), probes),
        }
    return out


def maxreg_summary(ctx, probes=20, slices=64, seed=None):
    """Identities and refinement-stable norm estimates for the first frozen piece."""
    g = ctx.grid
    if g.dim * g.cells > DENSE_LIMIT:
        return {"skipped": f"{g.dim * g.cells} unknowns exceed the dense limit {DENSE_LIMIT}"}
    seed = ctx.seed if seed is None else seed
    kit = AutonomousKit.from_field(ctx.A, 0)
    times = np.linspace(0.0, ctx.T, slices + 1)
    vec = random_probes(g, times, probes, seed + 101, vector=True)

    rvm = 0.0
    for f in vec:
        lhs = gradient_of(apply_RL(kit, f)).slices
        rvm = max(rvm, _rel(lhs, apply_ML_tilde(kit, f).slices))

    f, h = vec[0], vec[1]
    a, b = 0.7 - 0.2j, -1.3 + 0.5j
    combo = SpaceTimeField(g, times, a * f.slices + b * h.slices)
    lin = 0.0
    for op in (apply_RL, apply_ML_tilde):
        lin = max(lin, _rel(op(kit, combo).slices, a * op(kit, f).slices + b * op(kit, h).slices))

    # causality: changing the source after T/2 leaves earlier outputs alone
    half = times <= ctx.T / 2
    late = f.slices.copy()
    late[~half] += h.slices[~half]
    changed = apply_RL(kit, SpaceTimeField(g, times, late)).slices[half]
    causal = _rel(changed, apply_RL(kit, f).slices[half])

    scal = random_probes(g, times, max(16, probes // 2), seed + 202)
    here = _ml_norm(ctx, scal)
    coarse = ctx.coarse()
    there = _ml_norm(coarse, random_probes(coarse.grid, times, len(scal), seed + 202))
    change = max(here, there) / min(here, there) - 1.0

    # no admissible p-range is computable from (lambda, Lambda) alone: report only
    count = max(16, probes // 2)
    tent_here = _tent_ratios(ctx, random_probes(g, times, count, seed + 303, vector=True))
    tent_there = _tent_ratios(coarse, random_probes(coarse.grid, times, count, seed + 303, vector=True))
    tent = {k: {op: {"n": v, "n/2": tent_there[k][op]} for op, v in ops.items()}
            for k, ops in tent_here.items()}
    return {
        "rvm_residual": rvm,
        "rvm_tolerance": RVM_TOL,
        "linearity_residual": lin,
        "linearity_tolerance": LINEARITY_TOL,
        "causality_residual": causal,
        "ML_L2L2_estimate": {"n": here, "n/2": there},
        "ML_refinement_change": change,
        "ML_refinement_tolerance": REFINEMENT_TOL,
        "within_tolerance": bool(rvm <= RVM_TOL and lin <= LINEARITY_TOL
                                 and causal <= LINEARITY_TOL and change <= REFINEMENT_TOL),
        "tent_ratios": tent,
        "probes": probes,
        "slices": slices + 1,
    }
