"""One function per quantitative claim. Each returns a :class:`CheckReport`.

The functions take already-built objects (propagators, data, sampled
fields); choosing defaults from a run configuration is the job of
:mod:`propalab.verify.suite`.
"""

import math

import numpy as np

from .. import kernels
from ..evolve import (
    DENSE_LIMIT,
    Propagator,
    dissipation_integrals,
    sample_solution,
)
from ..grid import ball_offsets, discrete_gradient, set_distance
from ..norms import NormConfig, SpaceTimeField, gradient_symbol_sq, tent_norm, xp_norm
from .report import CheckReport


def time_pairs(T, breakpoints=(), count=8, seed=0):
    """Deterministic (t, s) samples in [0, T]: a zero gap, piece ends, random pairs."""
    rng = np.random.default_rng(seed)
    pairs = [(0.0, 0.0), (T, 0.0), (T, T / 2)]
    inner = [b for b in breakpoints if 0 < b < T]
    if inner:
        pairs.append((inner[-1], inner[0] / 2))
    for _ in range(count):
        s, t = np.sort(rng.uniform(0, T, 2))
        pairs.append((float(t), float(s)))
    return pairs


def _rel_change(values):
    values = np.asarray(values, dtype=float)
    lo, hi = values.min(), values.max()
    if hi == 0:
        return 0.0
    return float(hi / lo - 1.0) if lo > 0 else math.inf


def spectral_gap(grid):
    """Smallest nonzero eigenvalue of -Delta_h on the torus."""
    sym = gradient_symbol_sq(grid).ravel()
    return float(sym[sym > 1e-12 * sym.max()].min())


# -- contraction, conservation ----------------------------------------------------

def check_contraction(P: Propagator, pairs=None, tolerance=1e-10):
    if P.grid.cells > DENSE_LIMIT:
        raise ValueError("dense singular values need a grid of at most 4096 cells")
    pairs = pairs or time_pairs(P.T, P.A.breakpoints)
    sig = [float(np.linalg.norm(P.dense(t, s), 2)) for t, s in pairs]
    return CheckReport(
        "contraction",
        {"sigma_max": max(sig)},
        {"sigma_max": 1.0},
        {"sigma_max": "1 (L2 contraction)"},
        tolerance,
        f"largest singular value over {len(pairs)} (t, s) pairs <= 1 + {tolerance:g}",
        {"pairs": [[t, s] for t, s in pairs], "sigma": sig},
    )


def check_conservation(P: Propagator, pairs=None, tolerance=1e-10):
    pairs = pairs or time_pairs(P.T, P.A.breakpoints)
    one = np.ones(P.grid.shape, dtype=np.complex128)
    fwd = max(float(np.abs(P.apply(t, s, one) - 1).max()) for t, s in pairs)
    adj = max(float(np.abs(P.adjoint_apply(t, s, one) - 1).max()) for t, s in pairs)
    return CheckReport(
        "conservation",
        {"deviation": max(fwd, adj)},
        {"deviation": tolerance},
        {"deviation": "max(|Gamma(t,s)1 - 1|, |Gamma(t,s)*1 - 1|)"},
        0.0,
        f"absolute deviation <= {tolerance:g}",
        {"pairs": len(pairs), "forward": fwd, "adjoint": adj},
    )


# -- off-diagonal decay -------------------------------------------------------------

def separated_sets(grid, d, core=None):
    """F = ``core`` (default: cell 0); E = every cell at wrapped distance >= d from F."""
    F = np.atleast_1d(np.asarray([0] if core is None else core))
    dist = np.full(grid.shape, np.inf)
    for f in F:
        np.minimum(dist, grid.wrapped_distance(int(f)), out=dist)
    E = np.flatnonzero(dist.ravel() >= d - 1e-12)
    if len(E) == 0:
        raise ValueError(f"no cell at distance {d} on this torus")
    return E, F


def _block_norm(P, E, F, t, s, probes=64, iterations=8, seed=0):
    if P.grid.cells <= DENSE_LIMIT:
        return float(np.linalg.norm(P.dense(t, s)[np.ix_(E, F)], 2)), "dense"
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((len(F), probes)) + 1j * rng.standard_normal((len(F), probes))
    N = P.grid.cells
    est = 0.0
    for _ in range(iterations):
        X, _ = np.linalg.qr(X)
        full = np.zeros((N, X.shape[1]), dtype=np.complex128)
        full[F] = X
        Y = P.apply(t, s, full.T.reshape((-1,) + P.grid.shape)).reshape(-1, N).T[E]
        est = float(np.linalg.svd(Y, compute_uv=False)[0])
        back = np.zeros((N, Y.shape[1]), dtype=np.complex128)
        back[E] = Y
        X = P.adjoint_apply(t, s, back.T.reshape((-1,) + P.grid.shape)).reshape(-1, N).T[F]
    return est, "probing"


def check_offdiagonal(P: Propagator, E=None, F=None, t=None, s=0.0, cases=None):
    """Block norms of 1_E Gamma(t, s) 1_F against exp(-alpha d(E, F)^2 / (t - s)).

    Either one ``(E, F, t, s)`` or ``cases``: a list of ``(label, E, F, t, s)``.
    """
    if cases is None:
        cases = [("case", E, F, t, s)]
    alpha = P.A.ellipticity.alpha
    measured, bound, formulae, info = {}, {}, {}, {}
    method = "dense"
    for label, E_, F_, t_, s_ in cases:
        tau = t_ - s_
        if not tau > 0:
            raise ValueError("off-diagonal estimate needs t > s")
        if np.intersect1d(E_, F_).size:
            raise ValueError("E and F must be disjoint")
        if P.grid.period < 8 * math.sqrt(tau) * (1 - 1e-12):
            raise ValueError(f"period {P.grid.period} < 8 sqrt(t - s) = {8 * math.sqrt(tau):.4g}")
        d = set_distance(P.grid, E_, F_)
        if d * d / tau > 30 * (1 + 1e-12):
            raise ValueError(f"d^2/(t-s) = {d * d / tau:.3g} exceeds 30")
        value, method = _block_norm(P, E_, F_, t_, s_)
        measured[label] = value
        bound[label] = math.exp(-alpha * d * d / tau)
        formulae[label] = f"exp(-alpha d^2/(t-s)), alpha=lambda/(4 Lambda^2)={alpha:.6g}, d={d:.6g}, t-s={tau:.6g}"
        info[label] = {"d": d, "tau": tau, "d2_over_tau": d * d / tau}
    tol = 0.05 if method == "dense" else 0.15
    return CheckReport(
        "offdiagonal", measured, bound, formulae, tol,
        f"{method} block norm <= {1 + tol:g} * bound",
        {"alpha": alpha, "cases": info, "method": method},
    )


# -- L2 theory: energy equality and the norm chain -----------------------------------

def _require_mean_zero(grid, u0):
    scale = max(float(np.abs(u0).max()), 1e-300)
    if abs(np.mean(u0)) > 1e-12 * scale:
        raise ValueError("datum must have zero mean")


def decay_horizon(P: Propagator, decay=1e-6):
    """Time after which ||u(t)|| <= decay ||u0|| for mean-zero data (spectral gap)."""
    lam = P.A.ellipticity.lower
    return math.log(1.0 / decay) / (lam * spectral_gap(P.grid))


def extend_propagator(P: Propagator, T):
    if T <= P.T:
        return P
    return Propagator(P.A.extended_to(T), P.scheme)


def check_energy_equality(P: Propagator, u0, T=None, tolerance=1e-7):
    T = P.T if T is None else T
    u0 = np.asarray(u0, dtype=np.complex128)
    diss, _, uT = dissipation_integrals(extend_propagator(P, T), u0, T)
    n0 = P.grid.norm(u0) ** 2
    nT = P.grid.norm(uT) ** 2
    res = abs(n0 - diss - nT) / n0 if n0 > 0 else abs(diss) + abs(nT - n0)
    return CheckReport(
        "energy",
        {"relative_residual": res},
        {"relative_residual": tolerance},
        {"relative_residual": "| ||u0||^2 - 2 Re int <A grad u, grad u> - ||u(T)||^2 | / ||u0||^2"},
        0.0,
        f"relative residual <= {tolerance:g}",
        {"T": T, "u0_sq": n0, "dissipation": diss, "uT_sq": nT},
    )


def check_norm_equivalence(P: Propagator, u0, decay=1e-6, tolerance=0.02, samples=33):
    """sup_t ||u(t)|| = ||u0|| <= sqrt(2 Lambda) ||grad u|| <= sqrt(Lambda/lambda) ||u0||."""
    u0 = np.asarray(u0, dtype=np.complex128)
    _require_mean_zero(P.grid, u0)
    ell = P.A.ellipticity
    lam, Lam = ell.lower, ell.upper
    T = max(P.T, decay_horizon(P, decay))
    Pe = extend_propagator(P, T)
    _, gsq, uT = dissipation_integrals(Pe, u0, T)
    traj = sample_solution(Pe, u0, np.linspace(0, T, samples), gradients=False)
    n0 = P.grid.norm(u0)
    sup = max(P.grid.norm(s) for s in traj.slices)
    nT = P.grid.norm(uT)
    tail = nT**2 / (2 * lam)
    lower = math.sqrt(2 * Lam * gsq)
    upper = math.sqrt(2 * Lam * (gsq + tail))
    return CheckReport(
        "norm_equivalence",
        {"sup_over_initial": sup, "initial_vs_gradient": n0, "gradient_vs_initial": upper},
        {"sup_over_initial": n0, "initial_vs_gradient": lower,
         "gradient_vs_initial": math.sqrt(Lam / lam) * n0},
        {"sup_over_initial": "||u0|| (sup over samples, contraction)",
         "initial_vs_gradient": "sqrt(2 Lambda) ||grad u||_{L2(0,T;L2)} (truncated, conservative)",
         "gradient_vs_initial": "sqrt(Lambda/lambda) ||u0||; lhs uses int_0^T + ||u(T)||^2/(2 lambda)"},
        tolerance,
        f"each inequality holds up to {tolerance:.0%}",
        {"T": T, "lambda": lam, "Lambda": Lam, "grad_sq": gsq, "tail": tail,
         "decay_achieved": nT / n0 if n0 > 0 else 0.0},
    )


# -- representation -----------------------------------------------------------------

def check_interior_representation(P: Propagator, u: SpaceTimeField, s, t, h=None,
                                  count=10, seed=0, tolerance=1e-10):
    """<u(s), Gamma(t, s)^* h> = <u(t), h> for sampled ``u`` at times s < t."""
    i = int(np.argmin(np.abs(u.times - s)))
    j = int(np.argmin(np.abs(u.times - t)))
    if abs(u.times[i] - s) > 1e-12 or abs(u.times[j] - t) > 1e-12:
        raise ValueError("s and t must be sample times of u")
    if h is None:
        rng = np.random.default_rng(seed)
        h = [rng.standard_normal(P.grid.shape) + 1j * rng.standard_normal(P.grid.shape)
             for _ in range(count)]
    g = P.grid
    res = 0.0
    for hk in np.atleast_1d(np.asarray(h)).reshape((-1,) + g.shape):
        lhs = g.inner(u.slices[i], P.adjoint_apply(t, s, hk))
        rhs = g.inner(u.slices[j], hk)
        scale = max(g.norm(u.slices[i]) * g.norm(hk), 1e-300)
        res = max(res, abs(lhs - rhs) / scale)
    return CheckReport(
        "interior_representation",
        {"pairing_residual": res},
        {"pairing_residual": tolerance},
        {"pairing_residual": "|<u(s), Gamma(t,s)* h> - <u(t), h>| / (||u(s)|| ||h||)"},
        0.0,
        f"max normalized residual over test functions <= {tolerance:g}",
        {"s": s, "t": t, "tests": len(np.atleast_1d(np.asarray(h)).reshape((-1,) + g.shape))},
    )


# -- reverse Hoelder -----------------------------------------------------------------

def _window_average(F_times, F_values, lo, hi):
    """Mean over [lo, hi] of sampled values (trapezoid on the given nodes)."""
    m = (F_times >= lo - 1e-14) & (F_times <= hi + 1e-14)
    t, v = F_times[m], F_values[m]
    w = np.zeros(len(t))
    dt = np.diff(t)
    w[:-1] += dt / 2
    w[1:] += dt / 2
    return np.tensordot(w, v, axes=1) / (hi - lo)


def reverse_holder_ratio(P: Propagator, u0, centers=None, fractions=(0.5, 0.95), nodes=9):
    """sup over Whitney parabolic balls of (avg |u|^q)^{1/q} / (avg over the 4r ball |u|^2)^{1/2}.

    Centers (t, x) run over ``centers`` times and every cell; radii are
    ``fraction * sqrt(t) / 4``, so the enlarged ball stays in t > 0.
    """
    g = P.grid
    q = P.A.ellipticity.rh_exponent
    T = P.T
    centers = centers or (T / 8, T / 4, T / 2)
    plan, times = [], set()
    for tc in centers:
        for f in fractions:
            r = f * math.sqrt(tc) / 4
            if tc + 16 * r * r > T * (1 + 1e-12):
                raise ValueError("enlarged parabolic ball leaves [0, T]")
            if 4 * r > g.period / 2:
                raise ValueError("enlarged ball wraps around the torus")
            small = np.linspace(tc - r * r, tc + r * r, nodes)
            big = np.linspace(tc - 16 * r * r, tc + 16 * r * r, nodes)
            times.update(small.tolist())
            times.update(big.tolist())
            plan.append((tc, r, small, big))
    ts = np.array(sorted(times))
    traj = sample_solution(P, u0, ts, gradients=False)
    mag = np.abs(traj.slices)
    best, where = 0.0, None
    for tc, r, small, big in plan:
        o_small, o_big = ball_offsets(g, r), ball_offsets(g, 4 * r)
        num_t = kernels.ball_sum(mag**q, o_small) / len(o_small)
        den_t = kernels.ball_sum(mag**2, o_big) / len(o_big)
        num = _window_average(ts, num_t, small[0], small[-1]) ** (1 / q)
        den = np.sqrt(_window_average(ts, den_t, big[0], big[-1]))
        ratio = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
        k = int(np.argmax(ratio))
        if ratio.flat[k] > best:
            best, where = float(ratio.flat[k]), {"t": tc, "r": r, "cell": k}
    return best, {"q": q, "argmax": where, "balls": len(plan)}


def check_reverse_holder(P: Propagator, u0, ball_sample=None, reference=None, tolerance=0.30):
    """Whitney-ball reverse Hoelder ratio, compared across two resolutions.

    ``reference`` is an optional ``(P_other, u0_other)`` on a different grid
    describing the same continuum problem.
    """
    ratio, info = reverse_holder_ratio(P, u0, **(ball_sample or {}))
    details = {"ratio": ratio, **info}
    if reference is None:
        return CheckReport(
            "reverse_holder", {}, {}, {}, tolerance,
            "ratio reported; refinement comparison needs a reference grid", details,
        )
    other, _ = reverse_holder_ratio(reference[0], reference[1], **(ball_sample or {}))
    details["ratio_reference"] = other
    details["reference_n"] = reference[0].grid.n
    change = _rel_change([ratio, other])
    return CheckReport(
        "reverse_holder",
        {"refinement_change": change},
        {"refinement_change": tolerance},
        {"refinement_change": "max/min - 1 of the sup ratio across the two grids"},
        0.0,
        f"sup ratio stable within {tolerance:.0%} under refinement",
        details,
    )


# -- local energy -------------------------------------------------------------------

def cutoff_bump(grid, center, r):
    """Smooth radial cutoff: 1 on B(x, r), 0 beyond 1.9 r; returns (eta, kappa).

    ``kappa = r * max |grad_h eta|`` is measured on the grid.
    """
    rho = grid.wrapped_distance(center) / r
    s = np.clip((rho - 1.0) / 0.9, 0.0, 1.0)
    eta = 1.0 - s * s * s * (10 - 15 * s + 6 * s * s)
    kappa = r * float(np.abs(discrete_gradient(grid, eta)).max())
    return eta, kappa


def _simpson_weights(times):
    from scipy.integrate import simpson

    eye = np.eye(len(times))
    return np.array([simpson(e, x=times) for e in eye])


def check_local_energy(P: Propagator, u0, cylinder, centers=(0,), nodes=129):
    """Both local energy inequalities on [a, b] x B(x, 2r) with a measured cutoff constant.

    ``cylinder = (a, b, c, r)``; ``centers`` are flat cell indices.
    """
    a, b, c, r = cylinder
    if not 0 <= a < c <= b <= P.T:
        raise ValueError("need 0 <= a < c <= b <= T")
    g = P.grid
    ell = P.A.ellipticity
    lam, Lam = ell.lower, ell.upper
    ts = np.linspace(a, b, nodes)
    traj = sample_solution(P, sample_solution(P, u0, [a], gradients=False).slices[0]
                           if a > 0 else u0, ts, s=a)
    w_all = _simpson_weights(ts)
    late = ts >= c - 1e-14
    w_late = _simpson_weights(ts[late]) if late.sum() >= 2 else np.zeros(late.sum())
    sq = np.abs(traj.slices) ** 2
    gsq = (np.abs(traj.gradients) ** 2).sum(axis=1)
    m1 = b1 = m2 = b2 = 0.0
    best1 = best2 = -1.0
    kappas = []
    for x in centers:
        dist = g.wrapped_distance(int(x))
        if 2 * r >= g.period / 2:
            inner = outer = np.ones(g.shape, dtype=bool)
            kappa = 0.0
        else:
            inner, outer = dist < r, dist < 2 * r
            kappa = cutoff_bump(g, int(x), r)[1]
        kappas.append(kappa)
        hv = g.cell_volume
        u_b = float(sq[-1][inner].sum() * hv)
        big = float(np.tensordot(w_all, sq[:, outer].sum(axis=1), axes=1) * hv)
        grad_late = float(np.tensordot(w_late, gsq[late][:, inner].sum(axis=1), axes=1) * hv)
        K = 4 * kappa**2 * Lam**2 / (lam * r * r)
        bd1 = (K + 1.0 / (b - a)) * big
        bd2 = (1.0 + (b - a) * K) * big / (lam * (c - a))
        s1 = u_b / bd1 if bd1 > 0 else (0.0 if u_b == 0 else math.inf)
        s2 = grad_late / bd2 if bd2 > 0 else (0.0 if grad_late == 0 else math.inf)
        if s1 > best1:
            best1, m1, b1 = s1, u_b, bd1
        if s2 > best2:
            best2, m2, b2 = s2, grad_late, bd2
    return CheckReport(
        "local_energy",
        {"endpoint": m1, "gradient": m2},
        {"endpoint": b1, "gradient": b2},
        {"endpoint": "(4 kappa^2 Lambda^2/(lambda r^2) + 1/(b-a)) int_a^b ||u||^2_{B(x,2r)}",
         "gradient": "(1 + (b-a) 4 kappa^2 Lambda^2/(lambda r^2)) int_a^b ||u||^2_{B(x,2r)} / (lambda (c-a))"},
        0.0,
        "both inequalities hold literally with the measured cutoff constant",
        {"a": a, "b": b, "c": c, "r": r, "kappa": max(kappas), "centers": [int(x) for x in centers]},
    )


# -- maximal function vs square function ---------------------------------------------

def geometric_times(T, t_min, per_octave=4):
    """0 followed by T 2^{-k / per_octave} down to t_min, increasing."""
    k = int(math.ceil(per_octave * math.log2(T / t_min)))
    ts = T * 2.0 ** (-np.arange(k, -1, -1) / per_octave)
    return np.concatenate([[0.0], ts])


def max_square_ratios(P: Propagator, u0, ps, cfg: NormConfig, per_octave=4):
    ts = geometric_times(cfg.T, cfg.t_min, per_octave)
    traj = sample_solution(P, u0, ts)
    grad = traj.gradient_field()
    out = {}
    for p in ps:
        x = xp_norm(traj, p, cfg)
        tn = tent_norm(grad, p, cfg)
        out[p] = (x, tn)
    return out


def _pkey(p):
    return "inf" if np.isinf(p) else f"{p:g}"


def check_max_square(P: Propagator, u0, ps=(1, 2, 4, math.inf), cfg=None, reference=None,
                     tolerance=0.30):
    """||u||_{X^p} / ||grad u||_{T^{p,2}} and its reciprocal, compared across two grids."""
    u0 = np.asarray(u0)
    _require_mean_zero(P.grid, u0)
    cfg = cfg or NormConfig(T=P.T, t_min=P.T * 2.0**-8)
    here = max_square_ratios(P, u0, ps, cfg)
    details = {f"p={_pkey(p)}": {"xp": x, "tent_grad": tn} for p, (x, tn) in here.items()}
    for p, (x, tn) in here.items():
        if not (x > 0 and tn > 0 and math.isfinite(x) and math.isfinite(tn)):
            raise ValueError(f"degenerate norms at p={p}: X^p={x}, T^(p,2)={tn}")
    if reference is None:
        return CheckReport("max_square", {}, {}, {}, tolerance,
                           "ratios reported; refinement comparison needs a reference grid", details)
    there = max_square_ratios(reference[0], reference[1], ps, cfg)
    measured, bound, formulae = {}, {}, {}
    for p in ps:
        r_here = here[p][0] / here[p][1]
        r_there = there[p][0] / there[p][1]
        details[f"p={_pkey(p)}"].update(ratio=r_here, ratio_reference=r_there)
        key = f"p={_pkey(p)}"
        measured[key] = _rel_change([r_here, r_there])
        bound[key] = tolerance
        formulae[key] = "max/min - 1 of X^p / T^(p,2)(grad u) across grids (same for the reciprocal)"
    details["reference_n"] = reference[0].grid.n
    return CheckReport("max_square", measured, bound, formulae, 0.0,
                       f"both ratio directions stable within {tolerance:.0%} under refinement", details)


# -- structural L-infinity bound --------------------------------------------------------

def check_struct_bound(u: SpaceTimeField, dudt, lam, Lam, tolerance=0.05):
    """sup_t ||u|| <= sqrt(2 ||u||_{L2 Hdot1} ||du/dt||_{L2 Hdot-1}) with tail completion.

    ``u`` needs gradient slices; ``dudt`` has the slice shape of ``u``. The last
    slice feeds the tails int_T^inf ||grad u||^2 <= ||u(T)||^2/(2 lambda) and
    int_T^inf ||du/dt||^2_{-1} <= Lambda^2 ||u(T)||^2/(2 lambda).
    """
    g = u.grid
    if u.gradients is None:
        raise ValueError("u needs gradient slices")
    _require_mean_zero(g, u.slices[0])
    w = _simpson_weights(u.times)
    gsq = (np.abs(u.gradients) ** 2).reshape(len(u.times), -1).sum(axis=1) * g.cell_volume
    coef = np.fft.fftn(np.asarray(dudt), axes=tuple(range(1, g.dim + 1))) / g.cells
    sym = gradient_symbol_sq(g)
    sym.flat[0] = np.inf
    hsq = g.volume * (np.abs(coef) ** 2 / sym).reshape(len(u.times), -1).sum(axis=1)
    uT = g.norm(u.slices[-1]) ** 2
    G = float(w @ gsq) + uT / (2 * lam)
    D = float(w @ hsq) + Lam**2 * uT / (2 * lam)
    sup = max(g.norm(s) for s in u.slices)
    rhs = math.sqrt(2.0 * math.sqrt(max(G, 0.0)) * math.sqrt(max(D, 0.0)))
    return CheckReport(
        "struct_bound",
        {"sup_norm": sup},
        {"sup_norm": rhs},
        {"sup_norm": "sqrt(2 ||u||_{L2(Hdot1)} ||du/dt||_{L2(Hdot-1)}), tails from ||u(T)||"},
        tolerance,
        f"inequality holds up to {tolerance:.0%}",
        {"grad_sq": G, "dt_hneg1_sq": D, "tail_uT_sq": uT, "T": float(u.times[-1])},
    )


def struct_trajectory(P: Propagator, u0, times):
    """Samples of u, grad u and du/dt = -L(t) u along ``times`` (right-continuous pieces)."""
    traj = sample_solution(P, u0, times)
    dudt = np.stack([-P.operators[P.A.piece_index(t)].matvec(s) for t, s in zip(times, traj.slices)])
    return traj, dudt


# -- Whitney averages ---------------------------------------------------------------

def _distance_to_point(grid, point):
    """Wrapped distance from every cell center to an arbitrary point."""
    diff = grid.coordinates - np.asarray(point).reshape((-1,) + (1,) * grid.dim)
    diff = (diff + grid.period / 2) % grid.period - grid.period / 2
    return np.sqrt((diff**2).sum(axis=0))


def jump_distance(grid, u0, threshold=None):
    """Distance from every cell center to the nearest jump interface of u0 (inf if none).

    Interfaces sit at the midpoint between neighbours whose values differ by
    more than ``threshold`` (default: a quarter of the range of u0).
    """
    u0 = np.asarray(u0)
    span = float(np.ptp(u0.real) + np.ptp(u0.imag))
    thr = 0.25 * span if threshold is None else threshold
    dist = np.full(grid.shape, np.inf)
    if span == 0:
        return dist
    h = grid.spacing
    for j in range(grid.dim):
        jump = np.abs(np.roll(u0, -1, axis=j) - u0) > thr
        for cell in np.flatnonzero(jump.ravel()):
            point = np.array(np.unravel_index(cell, grid.shape), dtype=float) * h
            point[j] += h / 2
            np.minimum(dist, _distance_to_point(grid, point), out=dist)
    return dist


def whitney_errors(P: Propagator, u0, deltas, nodes=9):
    """Per-cell Whitney averages W(delta, x) of |u(t, y) - u0(x)|^2."""
    g = P.grid
    u0 = np.asarray(u0, dtype=np.complex128)
    plan, times = [], set()
    for d in deltas:
        tt = np.linspace(d / 2, d, nodes)
        times.update(tt.tolist())
        plan.append((d, tt))
    ts = np.array(sorted(times))
    traj = sample_solution(P, u0, ts, gradients=False)
    out = []
    for d, tt in plan:
        offs = ball_offsets(g, math.sqrt(d))
        sq = kernels.ball_sum(np.abs(traj.slices) ** 2, offs) / len(offs)
        re = kernels.ball_sum(traj.slices.real, offs) / len(offs)
        im = kernels.ball_sum(traj.slices.imag, offs) / len(offs)
        cross = re * u0.real + im * u0.imag
        W = sq - 2 * cross + np.abs(u0) ** 2
        out.append(np.maximum(_window_average(ts, W, tt[0], tt[-1]), 0.0))
    return out


def check_whitney_fatou(P: Propagator, u0, deltas, noise=0.10, final_factor=1e-3):
    """Whitney-average error away from the jump set along decreasing ``deltas``.

    The error at scale delta is the root mean square of W(delta, x) over cells
    farther than 4 sqrt(delta) from every jump interface.
    """
    deltas = sorted(deltas, reverse=True)
    if not deltas:
        raise ValueError("no admissible Whitney scale: refine the grid or enlarge the period")
    g = P.grid
    dist = jump_distance(g, u0)
    Ws = whitney_errors(P, u0, deltas)
    errs, at_jump = [], []
    for d, W in zip(deltas, Ws):
        eligible = dist > 4 * math.sqrt(d)
        if not eligible.any():
            raise ValueError(f"no cell farther than 4 sqrt(delta) from the jump at delta={d:g}")
        errs.append(float(np.sqrt(W[eligible].mean())))
        at_jump.append(float(np.sqrt(W[dist == dist.min()].mean())))
    steps = [errs[i + 1] / errs[i] if errs[i] > 0 else 0.0 for i in range(len(errs) - 1)]
    sup = float(np.abs(u0).max())
    return CheckReport(
        "whitney_fatou",
        {"monotone_step": max(steps) if steps else 0.0, "final_error": errs[-1]},
        {"monotone_step": 1.0, "final_error": final_factor * sup},
        {"monotone_step": f"err(delta_(j+1)) / err(delta_j) <= 1 (+{noise:.0%} noise)",
         "final_error": f"{final_factor:g} * ||u0||_inf"},
        noise,
        "errors decrease up to the noise factor; final error below the floor",
        {"deltas": deltas, "errors": errs, "error_at_jump": at_jump},
    )


# -- BV uniformity ---------------------------------------------------------------------

def _dual(y, p):
    a = np.abs(y)
    nrm = np.sum(a**p) ** (1 / p)
    if nrm == 0:
        return np.zeros_like(y)
    phase = np.where(a > 0, y / np.where(a > 0, a, 1), 0)
    return phase * (a / nrm) ** (p - 1)


def lp_operator_norm(M, p, starts=6, iterations=100, seed=0):
    """Lower estimate of ||M||_{p -> p} by the Boyd-Higham power method.

    Several starts (ones, alternating signs, random); the best local maximum wins.
    """
    q = p / (p - 1)
    n = M.shape[1]
    rng = np.random.default_rng(seed)
    x0s = [np.ones(n), (-1.0) ** np.arange(n)]
    x0s += [rng.standard_normal(n) + 1j * rng.standard_normal(n) for _ in range(starts - 2)]
    best = 0.0
    MH = M.conj().T
    for x in x0s:
        x = x / np.sum(np.abs(x) ** p) ** (1 / p)
        est = 0.0
        for _ in range(iterations):
            y = M @ x
            est = float(np.sum(np.abs(y) ** p) ** (1 / p))
            z = MH @ _dual(y, p)
            zq = float(np.sum(np.abs(z) ** q) ** (1 / q))
            if zq <= np.real(np.vdot(z, x)) * (1 + 1e-12):
                break
            x = _dual(z, q)
        best = max(best, est)
    return best


def sup_lp_norm(P: Propagator, p, times=None):
    """max over sample times t of ||Gamma(t, 0)||_{p -> p}."""
    if times is None:
        times = np.unique(np.concatenate([np.linspace(0, P.T, 17)[1:], P.T * np.geomspace(1e-3, 1, 13)]))
    vals = []
    M = np.eye(P.grid.cells, dtype=np.complex128)
    last = 0.0
    for t in sorted(times):
        M = P.dense(t, last) @ M
        last = t
        vals.append(lp_operator_norm(M, p))
    return max(vals), vals


def check_bv_uniformity(family, p=1.5, budgets=None, tolerance=0.10):
    """Partition uniformity of sup_t ||Gamma(t, 0)||_{p -> p} at a fixed BV budget.

    ``family`` maps jump counts K to propagators sharing one BV budget. The
    optional ``budgets`` map (budget -> propagator) only feeds the reported
    growth rates log(N(b)/N(0))/b: finitely many budgets cannot refute
    exponential growth, so they carry no pass/fail row.
    """
    if not 1 < p < 2:
        raise ValueError("p must lie in (1, 2)")
    norms = {K: sup_lp_norm(P, p)[0] for K, P in sorted(family.items())}
    floor = min(norms.values())
    measured = {f"K={K}": v for K, v in norms.items()}
    bound = {f"K={K}": (1 + tolerance) * floor for K in norms}
    formulae = {k: f"(1 + {tolerance:g}) * min_K sup_t ||Gamma(t,0)||_(p->p)" for k in measured}
    details = {"p": p, "norms": {str(K): v for K, v in norms.items()},
               "bv": {str(K): P.A.bv for K, P in family.items()}}
    if budgets:
        bn = {b: sup_lp_norm(P, p)[0] for b, P in sorted(budgets.items())}
        details["budget_norms"] = {f"{b:g}": v for b, v in bn.items()}
        if 0 in bn:
            details["budget_rates"] = {f"{b:g}": math.log(v / bn[0]) / b
                                       for b, v in bn.items() if b > 0}
    return CheckReport(
        "bv_uniformity", measured, bound, formulae, 0.0,
        f"norms within {tolerance:.0%} of the smallest across jump counts",
        details,
    )


# -- Gaussian kernel fit ------------------------------------------------------------------

def fit_gaussian(P: Propagator, taus, sources, margin=0.05, max_ratio=30.0):
    """Smallest (C, c) with |k| tau^{n/2} <= C exp(-c |x-y|^2 / (4 tau)) on the samples.

    C = (1 + margin) * max |k| tau^{n/2}; c is then the largest admissible constant.
    """
    g = P.grid
    cols = []
    for tau in taus:
        for y in sources:
            k = np.abs(P.kernel_column(tau, 0.0, int(y)))
            r2 = g.wrapped_distance(int(y)) ** 2
            cols.append((tau, r2, k))
    C0 = max(float((k * tau ** (g.dim / 2)).max()) for tau, _, k in cols)
    C = (1 + margin) * C0
    c = math.inf
    for tau, r2, k in cols:
        m = (r2 > 0) & (r2 / tau <= max_ratio)
        scaled = np.maximum(k[m] * tau ** (g.dim / 2), 1e-300)
        c = min(c, float((4 * tau / r2[m] * np.log(C / scaled)).min()))
    return C, c


def check_kernel_gaussian(P: Propagator, taus, sources, reference=None, tolerance=0.30):
    if not P.A.is_real_scalar():
        return CheckReport.skip(
            "kernel_gaussian", "not claimed: Gaussian bounds need real scalar coefficients",
            tolerance, "skipped outside the real scalar regime",
        )
    C, c = fit_gaussian(P, taus, sources)
    details = {"C": C, "c": c, "taus": list(taus)}
    measured = {"c_positive": math.exp(-c)}
    bound = {"c_positive": 1.0}
    formulae = {"c_positive": "exp(-c) <= 1, i.e. c >= 0"}
    if reference is not None:
        Cr, cr = fit_gaussian(reference, taus, _map_sources(P.grid, reference.grid, sources))
        details.update(C_reference=Cr, c_reference=cr, reference_n=reference.grid.n)
        measured.update(C_change=_rel_change([C, Cr]), c_change=_rel_change([c, cr]))
        bound.update(C_change=tolerance, c_change=tolerance)
        formulae.update(C_change="max/min - 1 of C across grids", c_change="max/min - 1 of c across grids")
    return CheckReport("kernel_gaussian", measured, bound, formulae, 0.0,
                       f"c > 0 and (C, c) stable within {tolerance:.0%} under refinement", details)


def _map_sources(grid, other, sources):
    """Cells of ``other`` at the same physical positions as ``sources`` on ``grid``."""
    out = []
    for y in sources:
        idx = grid.unravel(int(y))
        out.append(other.ravel([round(i * other.n / grid.n) for i in idx]))
    return out
