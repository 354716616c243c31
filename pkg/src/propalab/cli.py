"""Command-line scenario runner.

    propalab run --config cfg.json --out results/ [--dump-kernels] [--seed N]
    propalab list-checks

Exit status: 0 when every check passes, 2 when any check fails, 1 on a
configuration or runtime error.
"""

import argparse
import csv
import json
import logging
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .coeffs import EllipticityError
from .evolve import Scheme, default_scheme
from .grid import Grid
from .io import dump_coefficients, dump_kernels
from .verify import CHECKS, RunContext, run_check
from .verify.diagnostics import maxreg_summary, norm_summary
from .verify.suite import datum, physical_cells

log = logging.getLogger("propalab")

CSV_COLUMNS = ("check_id", "scenario", "measured", "bound", "slack", "pass", "wall_ms")
ROOM_CHECKS = tuple(sorted(k for k, v in CHECKS.items() if v.needs_torus_room))


class ConfigError(ValueError):
    pass


def load_schema():
    return json.loads(resources.files("propalab").joinpath("config_schema.json").read_text())


def _check_entries(cfg):
    out = []
    for item in cfg["checks"]:
        if isinstance(item, str):
            out.append((item, {}))
        else:
            out.append((item["id"], dict(item.get("overrides", {}))))
    return out


def validate_config(cfg):
    """Schema validation plus the cross-field rules; raises ConfigError."""
    try:
        jsonschema.validate(cfg, load_schema())
    except jsonschema.ValidationError as e:
        where = "/".join(str(p) for p in e.absolute_path) or "<root>"
        raise ConfigError(f"schema error at {where}: {e.message}") from None
    entries = _check_entries(cfg)
    unknown = sorted({cid for cid, _ in entries} - set(CHECKS))
    if unknown:
        raise ConfigError(f"unknown check id(s): {', '.join(unknown)}")
    ids = [cid for cid, _ in entries]
    if len(set(ids)) != len(ids):
        raise ConfigError("a check id is listed twice")
    period, T = cfg["grid"]["period"], cfg["T"]
    wants_room = sorted(set(ids) & set(ROOM_CHECKS))
    if wants_room and period < 8 * math.sqrt(T):
        raise ConfigError(
            f"period {period} < 8 sqrt(T) = {8 * math.sqrt(T):.4g}, required by {', '.join(wants_room)}"
        )
    return entries


def resolve_config(cfg, seed=None):
    """Config with every default filled in, as recorded in the report."""
    g = cfg["grid"]
    grid = Grid(g["dim"], g["n"], float(g["period"]))
    coeffs = {"params": {}, "seed": 0, **cfg["coefficients"]}
    if seed is not None:
        coeffs["seed"] = seed
    scheme = cfg.get("scheme", {})
    if "kind" not in scheme:
        scheme = {"kind": default_scheme(grid).kind, **scheme}
    scheme = {"substeps": None, **scheme}
    T = float(cfg["T"])
    norms = {"t_min": T * 2.0**-8, "p": [1, 2, 4, "inf"], "delta_levels": None, **cfg.get("norms", {})}
    return {
        "grid": {"dim": grid.dim, "n": grid.n, "period": grid.period},
        "coefficients": coeffs,
        "scheme": scheme,
        "T": T,
        "norms": norms,
        "checks": [{"id": cid, "overrides": ov} for cid, ov in _check_entries(cfg)],
        "diagnostics": {"norms": True, "maxreg": True, **cfg.get("diagnostics", {})},
        "workers": int(cfg.get("workers", os.cpu_count() or 1)),
    }


def build_context(resolved):
    g = resolved["grid"]
    c = resolved["coefficients"]
    s = resolved["scheme"]
    return RunContext(
        grid=Grid(g["dim"], g["n"], g["period"]),
        scenario=c["scenario"],
        params=dict(c["params"]),
        seed=int(c["seed"]),
        scheme=Scheme(s["kind"], s["substeps"]),
        T=resolved["T"],
        norm_options={k: v for k, v in resolved["norms"].items() if v is not None},
    )


def _jsonable(x):
    """Plain JSON types; non-finite floats become strings so the output stays strict JSON."""
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(x, (complex, np.complexfloating)):
        return {"re": _jsonable(x.real), "im": _jsonable(x.imag)}
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if x is None or isinstance(x, str):
        return x
    return repr(x)


def _timed(cid, ctx, overrides):
    t0 = time.perf_counter()
    report = run_check(cid, ctx, **overrides)
    return report, (time.perf_counter() - t0) * 1e3


def run(config_path, out_dir, dump=False, seed=None):
    """Execute one config; returns the exit status."""
    try:
        cfg = json.loads(Path(config_path).read_text())
        entries = validate_config(cfg)
        resolved = resolve_config(cfg, seed)
        ctx = build_context(resolved)
        ell = ctx.A.ellipticity
    except (OSError, json.JSONDecodeError, ConfigError, EllipticityError, ValueError) as e:
        log.error("configuration error: %s", e)
        return 1

    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        scenario = resolved["coefficients"]["scenario"]
        log.info("%s on %r: %d checks, %d workers", scenario, ctx.grid, len(entries), resolved["workers"])
        with ThreadPoolExecutor(max_workers=resolved["workers"]) as pool:
            futures = [pool.submit(_timed, cid, ctx, ov) for cid, ov in entries]
            results = [f.result() for f in futures]

        rows, checks = [], []
        for (cid, _), (report, wall_ms) in zip(entries, results):
            log.info("%-24s %s (%.0f ms)", cid, report.status, wall_ms)
            checks.append(report.to_dict())
            for r in report.rows(scenario):
                rows.append({**r, "wall_ms": f"{wall_ms:.1f}"})

        doc = {
            "tool": {"name": "propalab", "version": __version__},
            "config": resolved,
            "ellipticity": {**ell.as_dict(), "bv": ctx.A.bv, "pieces": ctx.A.num_pieces},
            "checks": checks,
            "summary": {
                s: sum(c["status"] == s for c in checks) for s in ("pass", "fail", "skipped")
            },
        }
        diag = resolved["diagnostics"]
        if diag["norms"]:
            doc["norms"] = norm_summary(ctx, datum(ctx)).to_dict()
        if diag["maxreg"]:
            doc["maxreg"] = maxreg_summary(ctx)
        if dump:
            doc["dumps"] = _write_dumps(ctx, out)

        (out / "report.json").write_text(json.dumps(_jsonable(doc), indent=2, sort_keys=True) + "\n")
        with open(out / "checks.csv", "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=CSV_COLUMNS, lineterminator="\n")
            w.writeheader()
            w.writerows(rows)
    except Exception as e:  # noqa: BLE001 - any failure while computing is a runtime error
        log.error("runtime error: %s: %s", type(e).__name__, e)
        return 1

    failed = doc["summary"]["fail"]
    log.info("%d passed, %d failed, %d skipped", doc["summary"]["pass"], failed, doc["summary"]["skipped"])
    return 2 if failed else 0


def _write_dumps(ctx, out):
    T = ctx.T
    pairs = [(T / 4, 0.0), (T, 0.0), (T, T / 2)]
    sources = physical_cells(ctx.grid, (0.0, 0.3))
    dump_coefficients(out / "coefficients.bin", ctx.A)
    dump_kernels(out / "kernels.bin", ctx.P, pairs, sources)
    return ["coefficients.bin", "kernels.bin"]


def list_checks(stream=None):
    stream = stream or sys.stdout
    for cid in sorted(CHECKS):
        spec = CHECKS[cid]
        stream.write(f"{cid}\t{spec.function}\t{spec.anchor}\t{spec.tolerance}\n")


def main(argv=None):
    parser = argparse.ArgumentParser(prog="propalab", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run the checks of one scenario config")
    p_run.add_argument("--config", required=True, type=Path)
    p_run.add_argument("--out", required=True, type=Path)
    p_run.add_argument("--dump-kernels", action="store_true",
                       help="also write coefficient and kernel-column binary dumps")
    p_run.add_argument("--seed", type=int, default=None, help="override coefficients.seed")
    sub.add_parser("list-checks", help="print check ids, functions, anchors and tolerances")
    args = parser.parse_args(argv)

    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.command == "list-checks":
        list_checks()
        return 0
    if args.seed is not None and args.seed < 0:
        log.error("configuration error: --seed must be nonnegative")
        return 1
    return run(args.config, args.out, dump=args.dump_kernels, seed=args.seed)


if __name__ == "__main__":
    sys.exit(main())
