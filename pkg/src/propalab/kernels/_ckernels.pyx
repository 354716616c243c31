# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops for wrapped-ball reductions and the divergence-form stencil.

All routines take batched C-contiguous arrays: a leading batch axis followed by
one or two periodic spatial axes. Offsets are nonnegative and already reduced
modulo the axis length.

A wrapped ball is a union of contiguous (circular) runs along the last axis,
one group per offset in the first axis. Sums use per-row prefix sums in long
double, maxima use van Herk / Gil-Werman sliding windows, so the cost per cell
is the number of runs rather than the number of offsets. Offset sets with
repeated entries fall back to the direct loops.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY

cnp.import_array()


def _runs(offs, Py_ssize_t n1):
    """(row offset, start, length) of the circular runs of ``offs`` (m, 2)."""
    rows = {}
    for o0, o1 in offs.tolist():
        rows.setdefault(o0, set()).add(o1)
    out = []
    for o0 in sorted(rows):
        cols = rows[o0]
        if len(cols) == n1:
            out.append((o0, 0, n1))
            continue
        for x in sorted(cols):
            if (x - 1) % n1 in cols:
                continue
            length = 1
            while (x + length) % n1 in cols:
                length += 1
            out.append((o0, x, length))
    return np.array(out, dtype=np.int_).reshape(-1, 3)


def _has_repeats(offs):
    return len(np.unique(offs, axis=0)) != len(offs)


def _as_2d(v, offs):
    v2 = v.reshape(v.shape[0], 1, v.shape[1])
    o2 = np.ascontiguousarray(np.column_stack([np.zeros(len(offs), dtype=np.int_), offs[:, 0]]))
    return v2, o2


def ball_sum_1d(v, offs):
    if _has_repeats(offs):
        return _direct_sum_1d(v, offs)
    v2, o2 = _as_2d(np.asarray(v), np.asarray(offs))
    return _run_sum(v2, _runs(o2, v2.shape[2])).reshape(v2.shape[0], v2.shape[2])


def ball_sum_2d(v, offs):
    if _has_repeats(offs):
        return _direct_sum_2d(v, offs)
    v = np.asarray(v)
    return _run_sum(v, _runs(np.asarray(offs), v.shape[2]))


def ball_max_1d(v, offs):
    if _has_repeats(offs):
        return _direct_max_1d(v, offs)
    v2, o2 = _as_2d(np.asarray(v), np.asarray(offs))
    return _run_max(v2, _runs(o2, v2.shape[2])).reshape(v2.shape[0], v2.shape[2])


def ball_max_2d(v, offs):
    if _has_repeats(offs):
        return _direct_max_2d(v, offs)
    v = np.asarray(v)
    return _run_max(v, _runs(np.asarray(offs), v.shape[2]))


def _run_sum(const double[:, :, ::1] v, const long[:, ::1] runs):
    cdef Py_ssize_t nb = v.shape[0], n0 = v.shape[1], n1 = v.shape[2], nr = runs.shape[0]
    cdef Py_ssize_t b, r, i, c0, c1, row, start
    cdef long double acc
    cdef long double[:, ::1] P = np.empty((n0, 2 * n1 + 1), dtype=np.longdouble)
    out = np.empty((nb, n0, n1), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    for b in range(nb):
        for row in range(n0):
            acc = 0.0
            P[row, 0] = 0.0
            for i in range(2 * n1):
                acc += v[b, row, i if i < n1 else i - n1]
                P[row, i + 1] = acc
        for c0 in range(n0):
            for c1 in range(n1):
                acc = 0.0
                for r in range(nr):
                    row = c0 + runs[r, 0]
                    if row >= n0:
                        row -= n0
                    start = c1 + runs[r, 1]
                    if start >= n1:
                        start -= n1
                    acc += P[row, start + runs[r, 2]] - P[row, start]
                o[b, c0, c1] = <double>acc
    return out


cdef void _sliding_max(const double[:, ::1] v, Py_ssize_t L,
                       double[::1] g, double[::1] hh, double[:, ::1] M) noexcept nogil:
    """M[row, i] = max(v[row, i .. i+L-1]) with circular indexing."""
    cdef Py_ssize_t n0 = v.shape[0], n1 = v.shape[1], m = 2 * n1
    cdef Py_ssize_t row, i, k
    cdef double x
    for row in range(n0):
        k = 0
        for i in range(m):
            x = v[row, i if i < n1 else i - n1]
            g[i] = x if k == 0 or x > g[i - 1] else g[i - 1]
            k += 1
            if k == L:
                k = 0
        # blocks end where (i + 1) is a multiple of L; the doubled row may end mid-block
        k = (m - 1) % L
        for i in range(m - 1, -1, -1):
            x = v[row, i if i < n1 else i - n1]
            hh[i] = x if i == m - 1 or k == L - 1 or x > hh[i + 1] else hh[i + 1]
            k -= 1
            if k < 0:
                k = L - 1
        for i in range(n1):
            M[row, i] = hh[i] if hh[i] > g[i + L - 1] else g[i + L - 1]


def _run_max(const double[:, :, ::1] v, const long[:, ::1] runs):
    cdef Py_ssize_t nb = v.shape[0], n0 = v.shape[1], n1 = v.shape[2], nr = runs.shape[0]
    cdef Py_ssize_t b, r, y0, y1, row, col, k
    lengths = sorted(set(np.asarray(runs)[:, 2].tolist()))
    slot = {L: k for k, L in enumerate(lengths)}
    cdef long[::1] which = np.array([slot[L] for L in np.asarray(runs)[:, 2].tolist()], dtype=np.int_)
    cdef double[:, :, ::1] M = np.empty((len(lengths), n0, n1), dtype=np.float64)
    cdef double[::1] g = np.empty(2 * n1, dtype=np.float64)
    cdef double[::1] hh = np.empty(2 * n1, dtype=np.float64)
    out = np.empty((nb, n0, n1), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef double best, x
    for b in range(nb):
        for k in range(len(lengths)):
            _sliding_max(v[b], lengths[k], g, hh, M[k])
        for y0 in range(n0):
            for y1 in range(n1):
                best = -INFINITY
                for r in range(nr):
                    # y - o over the run {s, ..., s + L - 1} is the window starting at y - s - L + 1
                    row = y0 - runs[r, 0]
                    if row < 0:
                        row += n0
                    col = (y1 - runs[r, 1] - runs[r, 2] + 1) % n1
                    if col < 0:
                        col += n1
                    x = M[which[r], row, col]
                    if x > best:
                        best = x
                o[b, y0, y1] = best
    return out


def _direct_sum_1d(const double[:, ::1] v, const long[:, ::1] offs):
    cdef Py_ssize_t nb = v.shape[0], n = v.shape[1], m = offs.shape[0]
    cdef Py_ssize_t b, c, k, j
    out = np.zeros((nb, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double acc
    for b in range(nb):
        for c in range(n):
            acc = 0.0
            for k in range(m):
                j = c + offs[k, 0]
                if j >= n:
                    j -= n
                acc += v[b, j]
            o[b, c] = acc
    return out


def _direct_sum_2d(const double[:, :, ::1] v, const long[:, ::1] offs):
    cdef Py_ssize_t nb = v.shape[0], n0 = v.shape[1], n1 = v.shape[2]
    cdef Py_ssize_t m = offs.shape[0]
    cdef Py_ssize_t b, c0, c1, k, j0, j1
    out = np.zeros((nb, n0, n1), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef double acc
    for b in range(nb):
        for c0 in range(n0):
            for c1 in range(n1):
                acc = 0.0
                for k in range(m):
                    j0 = c0 + offs[k, 0]
                    if j0 >= n0:
                        j0 -= n0
                    j1 = c1 + offs[k, 1]
                    if j1 >= n1:
                        j1 -= n1
                    acc += v[b, j0, j1]
                o[b, c0, c1] = acc
    return out


def _direct_max_1d(const double[:, ::1] v, const long[:, ::1] offs):
    cdef Py_ssize_t nb = v.shape[0], n = v.shape[1], m = offs.shape[0]
    cdef Py_ssize_t b, y, k, j
    out = np.empty((nb, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef double best
    for b in range(nb):
        for y in range(n):
            best = -INFINITY
            for k in range(m):
                j = y - offs[k, 0]
                if j < 0:
                    j += n
                if v[b, j] > best:
                    best = v[b, j]
            o[b, y] = best
    return out


def _direct_max_2d(const double[:, :, ::1] v, const long[:, ::1] offs):
    cdef Py_ssize_t nb = v.shape[0], n0 = v.shape[1], n1 = v.shape[2]
    cdef Py_ssize_t m = offs.shape[0]
    cdef Py_ssize_t b, y0, y1, k, j0, j1
    out = np.empty((nb, n0, n1), dtype=np.float64)
    cdef double[:, :, ::1] o = out
    cdef double best
    for b in range(nb):
        for y0 in range(n0):
            for y1 in range(n1):
                best = -INFINITY
                for k in range(m):
                    j0 = y0 - offs[k, 0]
                    if j0 < 0:
                        j0 += n0
                    j1 = y1 - offs[k, 1]
                    if j1 < 0:
                        j1 += n1
                    if v[b, j0, j1] > best:
                        best = v[b, j0, j1]
                o[b, y0, y1] = best
    return out


def divform_1d(const double complex[:, ::1] u, const double complex[::1] a, double h):
    """-(q_i - q_{i-1})/h with q_i = a_i (u_{i+1} - u_i)/h, batched over rows."""
    cdef Py_ssize_t nb = u.shape[0], n = u.shape[1]
    cdef Py_ssize_t b, i, ip
    cdef double ih2 = 1.0 / (h * h)
    out = np.empty((nb, n), dtype=np.complex128)
    cdef double complex[:, ::1] o = out
    cdef double complex q, qm
    for b in range(nb):
        qm = a[n - 1] * (u[b, 0] - u[b, n - 1])
        for i in range(n):
            ip = i + 1
            if ip == n:
                ip = 0
            q = a[i] * (u[b, ip] - u[b, i])
            o[b, i] = -(q - qm) * ih2
            qm = q
    return out


def divform_2d(const double complex[:, :, ::1] u,
               const double complex[:, :, :, ::1] a, double h):
    """Same stencil in 2D; a[i0, i1] is the 2x2 matrix anchored at cell (i0, i1)."""
    cdef Py_ssize_t nb = u.shape[0], n0 = u.shape[1], n1 = u.shape[2]
    cdef Py_ssize_t b, i0, i1, p0, p1, m0, m1
    cdef double ih2 = 1.0 / (h * h)
    out = np.empty((nb, n0, n1), dtype=np.complex128)
    cdef double complex[:, :, ::1] o = out
    cdef double complex g0, g1, q0, q1, q0m, q1m
    for b in range(nb):
        for i0 in range(n0):
            p0 = i0 + 1
            if p0 == n0:
                p0 = 0
            m0 = i0 - 1
            if m0 < 0:
                m0 = n0 - 1
            for i1 in range(n1):
                p1 = i1 + 1
                if p1 == n1:
                    p1 = 0
                m1 = i1 - 1
                if m1 < 0:
                    m1 = n1 - 1
                # flux at (i0, i1)
                g0 = u[b, p0, i1] - u[b, i0, i1]
                g1 = u[b, i0, p1] - u[b, i0, i1]
                q0 = a[i0, i1, 0, 0] * g0 + a[i0, i1, 0, 1] * g1
                q1 = a[i0, i1, 1, 0] * g0 + a[i0, i1, 1, 1] * g1
                # component 0 of the flux at (i0-1, i1)
                g0 = u[b, i0, i1] - u[b, m0, i1]
                g1 = u[b, m0, p1] - u[b, m0, i1]
                q0m = a[m0, i1, 0, 0] * g0 + a[m0, i1, 0, 1] * g1
                # component 1 of the flux at (i0, i1-1)
                g0 = u[b, p0, m1] - u[b, i0, m1]
                g1 = u[b, i0, i1] - u[b, i0, m1]
                q1m = a[i0, m1, 1, 0] * g0 + a[i0, m1, 1, 1] * g1
                o[b, i0, i1] = -((q0 - q0m) + (q1 - q1m)) * ih2
    return out
