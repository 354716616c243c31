"""Binary dumps: little-endian float64 (re, im) pairs with a JSON sidecar."""

import json
from pathlib import Path

import numpy as np

_DTYPE = np.dtype("<c16")  # complex128 little-endian == interleaved <f8 (re, im)


def write_complex(path, array, meta):
    """Write ``array`` flattened in C order plus ``path + '.json'`` describing it."""
    path = Path(path)
    a = np.ascontiguousarray(array, dtype=_DTYPE)
    path.write_bytes(a.tobytes(order="C"))
    sidecar = {"format": "float64-le (re, im) pairs", "shape": list(a.shape), **meta}
    path.with_name(path.name + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return path


def read_complex(path):
    """Inverse of :func:`write_complex`; returns (array, sidecar)."""
    path = Path(path)
    meta = json.loads(path.with_name(path.name + ".json").read_text())
    data = np.frombuffer(path.read_bytes(), dtype=_DTYPE).astype(np.complex128)
    return data.reshape(meta["shape"]), meta


def edge_major(A):
    """Pieces reordered to (piece, edge direction i, cell, column j).

    Flux component i lives on the edges of direction i and reads row i of A.
    """
    d = A.grid.dim
    p = A.pieces.reshape(A.num_pieces, A.grid.cells, d, d)
    return np.transpose(p, (0, 2, 1, 3))


def dump_coefficients(path, A):
    return write_complex(path, edge_major(A), {
        "kind": "coefficients",
        "order": "piece, edge direction (matrix row), cell (row-major), matrix column",
        "breakpoints": [float(t) for t in A.breakpoints],
        "grid": {"dim": A.grid.dim, "n": A.grid.n, "period": A.grid.period},
        "scenario": A.name,
    })


def dump_kernels(path, P, pairs, sources):
    """Kernel columns k(t, s, ., y) for every (t, s) pair and source cell y."""
    g = P.grid
    cols = np.stack([
        np.stack([P.kernel_column(t, s, y).ravel() for y in sources]) for t, s in pairs
    ])
    return write_complex(path, cols, {
        "kind": "kernels",
        "order": "time pair, source cell, target cell (row-major)",
        "pairs": [[float(t), float(s)] for t, s in pairs],
        "sources": [int(y) for y in sources],
        "grid": {"dim": g.dim, "n": g.n, "period": g.period},
        "scheme": P.scheme.kind,
    })
