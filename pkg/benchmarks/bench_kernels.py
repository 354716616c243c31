"""Compare the compiled and numpy kernel backends.

    python benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Each case runs once per backend to check that both produce the same answer,
then reports the best wall time over ``--repeat`` runs.
"""

import argparse
import json
import sys
import timeit

import numpy as np

from propalab import kernels
from propalab.grid import Grid, ball_offsets


def cases():
    rng = np.random.default_rng(0)
    for dim, n, radius_cells in ((1, 1024, 16), (1, 4096, 64), (2, 64, 6), (2, 128, 10)):
        g = Grid(dim, n, float(n))
        offs = ball_offsets(g, radius_cells * g.spacing)
        batch = 32
        vals = rng.random((batch,) + g.shape)
        u = rng.standard_normal((batch,) + g.shape) + 1j * rng.standard_normal((batch,) + g.shape)
        coeff = (1.0 + 0.2 * rng.random(g.shape + (dim, dim))) * np.eye(dim)
        tag = f"d={dim} n={n}"
        yield f"ball_sum {tag} |B|={len(offs)}", lambda v=vals, o=offs: kernels.ball_sum(v, o)
        yield f"ball_max {tag} |B|={len(offs)}", lambda v=vals, o=offs: kernels.ball_max(v, o)
        yield f"divergence_form {tag}", lambda u=u, c=coeff, h=g.spacing: kernels.divergence_form(u, c, h)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", default=None)
    args = ap.parse_args(argv)

    backends = kernels.available_backends()
    if "cython" not in backends:
        print("compiled backend not built; only the numpy fallback is timed", file=sys.stderr)
    rows = []
    print(f"{'case':44s}" + "".join(f"{b:>12s}" for b in backends) + "     speedup")
    for name, fn in cases():
        times, results = {}, {}
        for b in backends:
            previous = kernels.use_backend(b)
            try:
                results[b] = fn()
                times[b] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
            finally:
                kernels.use_backend(previous)
        ref = results[backends[0]]
        for b in backends[1:]:
            if not np.allclose(results[b], ref, rtol=1e-12, atol=1e-12):
                raise SystemExit(f"{name}: backends disagree")
        speed = times["python"] / times["cython"] if "cython" in times else 1.0
        print(f"{name:44s}" + "".join(f"{times[b] * 1e3:10.2f}ms" for b in backends) + f"{speed:11.1f}x")
        rows.append({"case": name, "seconds": times, "speedup": speed})
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)


if __name__ == "__main__":
    main()
