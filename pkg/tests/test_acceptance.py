"""Acceptance criteria 1-12 at their stated tolerances.

Each test prints one ``criterion N: PASS|FAIL`` line (visible with ``-v`` or
``-s``) before asserting.
"""

import dataclasses
import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from propalab.cli import build_context, resolve_config
from propalab.coeffs import identity_pieces, make_scenario, random_elliptic_staircase
from propalab.evolve import Propagator, Scheme, duhamel_residual
from propalab.grid import Grid
from propalab.maxreg import AutonomousKit, apply_ML_tilde, apply_RL, gradient_of, random_probes
from propalab.norms import NormConfig, SpaceTimeField, l2l2_norm, lebesgue_norm, slice_norm, tent_norm
from propalab.verify import checks as C
from propalab.verify import run_check
from propalab.verify.suite import datum

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
SCENARIOS = ("heat", "real_checkerboard", "complex_perturb", "bv_staircase", "time_oscillating")


@pytest.fixture
def verdict(capsys):
    def emit(n, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {n}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok
    return emit


def config_context(name, **norm_over):
    cfg = json.loads((CONFIGS / f"{name}.json").read_text())
    ctx = build_context(resolve_config(cfg))
    if norm_over:
        ctx = dataclasses.replace(ctx, norm_options={**ctx.norm_options, **norm_over})
    return ctx


def line_context(scenario, n=64, period=8.0, **params):
    return dataclasses.replace(config_context("heat"), grid=Grid(1, n, period),
                               scenario=scenario, params=params)


def rel_l2(a, b):
    return float(np.linalg.norm(a - b) / np.linalg.norm(b))


def test_criterion_01_heat_kernel_oracle(verdict):
    t0 = time.perf_counter()
    g = Grid(1, 256, 16.0)
    P = Propagator(make_scenario("heat", g, {"T": 1.0}), Scheme("exact_expm"))
    worst = 0.0
    for tau in (0.25, 1.0):
        for y in (0, 77):
            col = P.kernel_column(tau, 0.0, y)
            x = g.wrapped_distance(y)
            gauss = sum(np.exp(-((x + m * g.period) ** 2) / (4 * tau)) for m in range(-8, 9)) / math.sqrt(4 * math.pi * tau)
            worst = max(worst, rel_l2(col, gauss))
    wall = time.perf_counter() - t0
    ok = verdict(1, worst <= 1e-8 and wall < 5.0,
                 f"relative L2 error {worst:.3e} (bound 1e-8), {wall:.2f} s (bound 5 s)")
    assert ok


def test_criterion_02_contraction_suite(verdict):
    t0 = time.perf_counter()
    g = Grid(1, 64, 8.0)
    worst = 0.0
    for seed in range(20):
        A = random_elliptic_staircase(g, seed, lower=0.5, upper=2.0)
        assert A.ellipticity.lower >= 0.5 - 1e-12 and A.ellipticity.upper <= 2.0 + 1e-12
        rep = C.check_contraction(Propagator(A, Scheme("exact_expm")), C.time_pairs(1.0, A.breakpoints, seed=seed))
        worst = max(worst, rep.measured["sigma_max"])
    wall = time.perf_counter() - t0
    ok = verdict(2, worst <= 1 + 1e-10 and wall < 60,
                 f"max sigma_max {worst:.15f} (bound 1 + 1e-10), {wall:.1f} s")
    assert ok


def test_criterion_03_offdiagonal(verdict):
    t0 = time.perf_counter()
    worst, alphas = 0.0, {}
    for label, ctx in (("1,1", line_context("heat")),
                       ("0.5,2", line_context("real_checkerboard", lo=0.5, hi=2.0))):
        alphas[label] = ctx.A.ellipticity.alpha
        rep = run_check("offdiagonal", ctx)
        assert sorted(rep.details["cases"]) == sorted(f"d2/tau={r}" for r in (1, 4, 9, 16, 25))
        worst = max(worst, max(rep.slack.values()))
    wall = time.perf_counter() - t0
    ok = (math.isclose(alphas["1,1"], 0.25) and math.isclose(alphas["0.5,2"], 1 / 32)
          and worst <= 1.05 and wall < 60)
    verdict(3, ok, f"alpha {alphas}, worst block norm / exp(-alpha d^2/tau) {worst:.4f} (bound 1.05), {wall:.1f} s")
    assert ok


def test_criterion_04_energy_and_norm_chain(verdict):
    energy, chain = 0.0, 0.0
    for name in ("heat", "real_checkerboard", "complex_perturb"):
        ctx = config_context(name)
        u0 = datum(ctx)
        assert abs(u0.mean()) <= 1e-12 * np.abs(u0).max()
        energy = max(energy, run_check("energy", ctx).measured["relative_residual"])
        chain = max(chain, max(run_check("norm_equivalence", ctx).slack.values()))
    ok = verdict(4, energy <= 1e-7 and chain <= 1.02,
                 f"energy residual {energy:.2e} (bound 1e-7), worst chain slack {chain:.4f} (bound 1.02)")
    assert ok


def test_criterion_05_conservation(verdict):
    worst = {}
    for name in SCENARIOS:
        rep = run_check("conservation", config_context(name))
        worst[name] = rep.measured["deviation"]
    ok = verdict(5, max(worst.values()) <= 1e-10,
                 "max deviation " + ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))
    assert ok


def test_criterion_06_exact_identities(verdict):
    rng = np.random.default_rng(2024)
    tent_res = slice_res = 0.0
    for i in range(50):
        g = Grid(1, 32, 4.0) if i % 2 else Grid(2, 8, 4.0)
        ts = np.concatenate([[0.0], np.sort(rng.uniform(1e-3, 1.0, 15))])
        shape = (len(ts), g.dim) + g.shape
        F = SpaceTimeField(g, ts, rng.standard_normal(shape) + 1j * rng.standard_normal(shape))
        cfg = NormConfig(T=1.0, t_min=float(ts[1]))
        ref = l2l2_norm(F, cfg.t_min, cfg.T)
        tent_res = max(tent_res, abs(tent_norm(F, 2, cfg) - ref) / ref)
        f = F.slices[-1, 0]
        delta = float(rng.uniform(1e-3, 4.0))
        slice_res = max(slice_res, abs(slice_norm(g, f, 2, delta) - lebesgue_norm(g, f, 2)) / lebesgue_norm(g, f, 2))

    ctx = config_context("complex_perturb")
    kit = AutonomousKit.from_field(ctx.A, 0)
    times = np.linspace(0.0, ctx.T, 65)
    rvm = 0.0
    for f in random_probes(ctx.grid, times, 20, seed=7, vector=True):
        rhs = apply_ML_tilde(kit, f).slices
        rvm = max(rvm, float(np.abs(gradient_of(apply_RL(kit, f)).slices - rhs).max() / np.abs(rhs).max()))
    ok = verdict(6, tent_res <= 1e-12 and slice_res <= 1e-12 and rvm <= 1e-9,
                 f"T22-L2L2 {tent_res:.1e}, E2-L2 {slice_res:.1e} (bound 1e-12), grad R_L - M~_L {rvm:.1e} (bound 1e-9)")
    assert ok


def test_criterion_07_duhamel(verdict):
    worst, levels = 0.0, []
    for ctx in (line_context("complex_perturb", eps=0.05), config_context("complex_perturb")):
        assert ctx.A.name == "complex_perturb" and ctx.params.get("eps", 0.05) == 0.05
        g = ctx.grid
        ref = identity_pieces(g, np.ones((1,) + g.shape))[0]
        res, info = duhamel_residual(ctx.P, ref, datum(ctx) + datum(ctx, "mode"), ctx.T)
        worst = max(worst, res)
        levels.append(info["levels"])
    ok = verdict(7, worst <= 1e-7, f"residual {worst:.2e} (bound 1e-7) after {levels} refinement levels")
    assert ok


def test_criterion_08_reverse_holder(verdict):
    out = {}
    for name, params in (("heat", {}), ("real_checkerboard", {"lo": 0.5, "hi": 2.0}),
                         ("complex_perturb", {"eps": 0.05})):
        rep = run_check("reverse_holder", line_context(name, n=64, **params))
        assert rep.details["reference_n"] == 32 and rep.details["q"] == 6.0
        out[name] = (rep.details["ratio"], rep.details["ratio_reference"], rep.measured["refinement_change"])
    ok = all(math.isfinite(a) and math.isfinite(b) and ch <= 0.30 for a, b, ch in out.values())
    verdict(8, ok, ", ".join(f"{k} ratio {a:.3f}/{b:.3f} change {c:.1%}" for k, (a, b, c) in out.items())
            + " (bound 30%)")
    assert ok


def test_criterion_09_max_square(verdict):
    worst, finite = 0.0, True
    for name in SCENARIOS:
        rep = run_check("max_square", config_context(name, p=[1, 2, 4]))
        for p in ("1", "2", "4"):
            d = rep.details[f"p={p}"]
            finite &= all(0 < v < math.inf for v in (d["ratio"], 1 / d["ratio"],
                                                     d["ratio_reference"], 1 / d["ratio_reference"]))
        worst = max(worst, max(rep.measured.values()))
    ok = verdict(9, finite and worst <= 0.30, f"finite {finite}, worst refinement change {worst:.1%} (bound 30%)")
    assert ok


def test_criterion_10_bv_uniformity(verdict):
    ctx = config_context("bv_staircase")
    rep = run_check("bv_uniformity", ctx, p=1.5, budget=0.5)
    norms = rep.details["norms"]
    spread = max(norms.values()) / min(norms.values()) - 1
    ok = verdict(10, sorted(map(int, norms)) == [1, 2, 4, 8, 16] and spread <= 0.10,
                 f"sup_t ||Gamma(t,0)||_1.5 over K: {', '.join(f'{v:.4f}' for v in norms.values())}; "
                 f"spread {spread:.2%} (bound 10%)")
    assert ok


def test_criterion_11_whitney_fatou(verdict):
    ctx = config_context("real_checkerboard")
    rep = run_check("whitney_fatou", ctx)
    errs = rep.details["errors"]
    sup = float(np.abs(datum(ctx, "step")).max())
    steps = [b / a for a, b in zip(errs, errs[1:])]
    ok = all(s <= 1.0 + 0.10 for s in steps) and errs[-1] <= 1e-3 * sup and errs[-1] < errs[0]
    verdict(11, ok, f"errors {', '.join(f'{e:.1e}' for e in errs)}; final {errs[-1]:.2e} (bound {1e-3 * sup:.0e})")
    assert ok


def test_criterion_12_default_suite(verdict, tmp_path):
    t0 = time.perf_counter()
    codes = {}
    for name in SCENARIOS:
        proc = subprocess.run([sys.executable, "-m", "propalab", "run", "--config", str(CONFIGS / f"{name}.json"),
                               "--out", str(tmp_path / name)], capture_output=True, text=True)
        codes[name] = proc.returncode
    wall = time.perf_counter() - t0
    ok = verdict(12, all(c == 0 for c in codes.values()) and wall < 600,
                 f"exit codes {codes}, {wall:.0f} s (bound 600 s)")
    assert ok
