import json
import struct

import numpy as np

from propalab.coeffs import make_scenario
from propalab.evolve import Propagator
from propalab.grid import Grid
from propalab.io import dump_coefficients, dump_kernels, edge_major, read_complex, write_complex


def test_round_trip(tmp_path, rng):
    a = rng.standard_normal((3, 4, 5)) + 1j * rng.standard_normal((3, 4, 5))
    write_complex(tmp_path / "a.bin", a, {"kind": "test"})
    b, meta = read_complex(tmp_path / "a.bin")
    np.testing.assert_array_equal(a, b)
    assert meta["shape"] == [3, 4, 5] and meta["kind"] == "test"


def test_little_endian_interleaved(tmp_path):
    write_complex(tmp_path / "x.bin", np.array([1.5 - 2.0j, 0.25j]), {})
    raw = (tmp_path / "x.bin").read_bytes()
    assert struct.unpack("<4d", raw) == (1.5, -2.0, 0.0, 0.25)


def test_edge_major_order(tmp_path):
    g = Grid(2, 4, 1.0)
    A = make_scenario("complex_perturb", g, {"eps": 0.3, "pieces": 2})
    E = edge_major(A)
    assert E.shape == (2, 2, 16, 2)
    for piece, i, cell, j in [(0, 0, 5, 1), (1, 1, 9, 0), (1, 0, 15, 1)]:
        x, y = divmod(cell, 4)
        assert E[piece, i, cell, j] == A.pieces[piece, x, y, i, j]
    dump_coefficients(tmp_path / "c.bin", A)
    data, meta = read_complex(tmp_path / "c.bin")
    np.testing.assert_array_equal(data, E)
    assert meta["kind"] == "coefficients" and len(meta["breakpoints"]) == 3


def test_kernel_dump_matches_columns(tmp_path):
    g = Grid(1, 16, 4.0)
    P = Propagator(make_scenario("heat", g, {}))
    dump_kernels(tmp_path / "k.bin", P, [(0.5, 0.0), (1.0, 0.5)], [0, 3])
    data, meta = read_complex(tmp_path / "k.bin")
    assert data.shape == (2, 2, 16)
    np.testing.assert_array_equal(data[1, 1], P.kernel_column(1.0, 0.5, 3).ravel())
    side = json.loads((tmp_path / "k.bin.json").read_text())
    assert side["pairs"] == [[0.5, 0.0], [1.0, 0.5]] and side["sources"] == [0, 3]
