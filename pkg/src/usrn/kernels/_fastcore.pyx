# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled interpolation kernels; mirrors usrn.kernels.reference bit-for-bit."""

import numpy as np

cimport numpy as cnp
from libc.math cimport floor, fabs

cnp.import_array()

DOMAIN_EPS = 1e-9

cdef double _DOMAIN_EPS = 1e-9
cdef unsigned long long HASH_PRIME_Y = 2654435761ULL
cdef unsigned long long HASH_PRIME_Z = 805459861ULL


cdef inline double _clamp_unit(double v, Py_ssize_t row) except -2.0:
    if fabs(v) > 1.0 + _DOMAIN_EPS:
        raise ValueError(
            f"coordinate outside [-1,1]^3 at row {row}: component {v!r}"
        )
    if v < -1.0:
        return -1.0
    if v > 1.0:
        return 1.0
    return v


def trilinear_corners(int nx, int ny, int nz, coords):
    """Corner indices and weights on a vertex grid of (nx, ny, nz) points."""
    if min(nx, ny, nz) < 2:
        raise ValueError(f"grid needs >= 2 vertices per axis, got {(nx, ny, nz)}")
    cdef const double[:, ::1] c = np.ascontiguousarray(coords, dtype=np.float64)
    if c.shape[1] != 3:
        raise ValueError(f"coords must have shape (B, 3), got ({c.shape[0]}, {c.shape[1]})")
    cdef Py_ssize_t b, n = c.shape[0]
    idx_arr = np.empty((n, 8), dtype=np.int64)
    w_arr = np.empty((n, 8), dtype=np.float64)
    cdef long long[:, ::1] idx = idx_arr
    cdef double[:, ::1] w = w_arr
    cdef double ux, uy, uz, fx, fy, fz
    cdef long long ix, iy, iz, dx, dy, dz, cx, cy, cz, k
    for b in range(n):
        ux = (_clamp_unit(c[b, 0], b) + 1.0) * 0.5 * (nx - 1)
        uy = (_clamp_unit(c[b, 1], b) + 1.0) * 0.5 * (ny - 1)
        uz = (_clamp_unit(c[b, 2], b) + 1.0) * 0.5 * (nz - 1)
        ix = <long long> floor(ux)
        iy = <long long> floor(uy)
        iz = <long long> floor(uz)
        if ix > nx - 2: ix = nx - 2
        if iy > ny - 2: iy = ny - 2
        if iz > nz - 2: iz = nz - 2
        if ix < 0: ix = 0
        if iy < 0: iy = 0
        if iz < 0: iz = 0
        fx = ux - ix
        fy = uy - iy
        fz = uz - iz
        k = 0
        for dz in range(2):
            for dy in range(2):
                for dx in range(2):
                    cx = ix + dx
                    cy = iy + dy
                    cz = iz + dz
                    idx[b, k] = cx + nx * (cy + ny * cz)
                    w[b, k] = ((fx if dx else 1.0 - fx)
                               * (fy if dy else 1.0 - fy)
                               * (fz if dz else 1.0 - fz))
                    k += 1
    return idx_arr, w_arr


def hash_corners(int resolution, int log2_table_size, coords):
    """Corner table indices and weights for one hash-grid level."""
    if resolution < 1:
        raise ValueError(f"resolution must be >= 1, got {resolution}")
    cdef const double[:, ::1] c = np.ascontiguousarray(coords, dtype=np.float64)
    if c.shape[1] != 3:
        raise ValueError(f"coords must have shape (B, 3), got ({c.shape[0]}, {c.shape[1]})")
    cdef Py_ssize_t b, n = c.shape[0]
    cdef long long res = resolution
    cdef unsigned long long table_size = 1ULL << log2_table_size
    cdef unsigned long long mask = table_size - 1
    cdef long long verts = res + 1
    cdef bint direct = <unsigned long long>(verts * verts * verts) <= table_size
    idx_arr = np.empty((n, 8), dtype=np.int64)
    w_arr = np.empty((n, 8), dtype=np.float64)
    cdef long long[:, ::1] idx = idx_arr
    cdef double[:, ::1] w = w_arr
    cdef double ux, uy, uz, fx, fy, fz
    cdef long long ix, iy, iz, dx, dy, dz, k
    cdef unsigned long long cx, cy, cz
    for b in range(n):
        ux = (_clamp_unit(c[b, 0], b) + 1.0) * 0.5 * res
        uy = (_clamp_unit(c[b, 1], b) + 1.0) * 0.5 * res
        uz = (_clamp_unit(c[b, 2], b) + 1.0) * 0.5 * res
        ix = <long long> floor(ux)
        iy = <long long> floor(uy)
        iz = <long long> floor(uz)
        if ix > res - 1: ix = res - 1
        if iy > res - 1: iy = res - 1
        if iz > res - 1: iz = res - 1
        if ix < 0: ix = 0
        if iy < 0: iy = 0
        if iz < 0: iz = 0
        fx = ux - ix
        fy = uy - iy
        fz = uz - iz
        k = 0
        for dz in range(2):
            for dy in range(2):
                for dx in range(2):
                    cx = <unsigned long long>(ix + dx)
                    cy = <unsigned long long>(iy + dy)
                    cz = <unsigned long long>(iz + dz)
                    if direct:
                        idx[b, k] = <long long>(cx + verts * (cy + verts * cz))
                    else:
                        idx[b, k] = <long long>(
                            (cx ^ (cy * HASH_PRIME_Y) ^ (cz * HASH_PRIME_Z)) & mask
                        )
                    w[b, k] = ((fx if dx else 1.0 - fx)
                               * (fy if dy else 1.0 - fy)
                               * (fz if dz else 1.0 - fz))
                    k += 1
    return idx_arr, w_arr


def weighted_gather(table, idx, w):
    """Blend rows of `table` (V, F) at indices (B, 8) with weights (B, 8)."""
    cdef const double[:, ::1] t = np.ascontiguousarray(table, dtype=np.float64)
    cdef const long long[:, ::1] ii = np.ascontiguousarray(idx, dtype=np.int64)
    cdef const double[:, ::1] ww = np.ascontiguousarray(w, dtype=np.float64)
    cdef Py_ssize_t b, k, f, n = ii.shape[0], nf = t.shape[1]
    out_arr = np.zeros((n, nf), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef double wk
    cdef long long row
    for b in range(n):
        for k in range(8):
            row = ii[b, k]
            wk = ww[b, k]
            for f in range(nf):
                out[b, f] += wk * t[row, f]
    return out_arr


def weighted_scatter_add(out, idx, w, upstream):
    """Accumulate weighted upstream gradients (B, F) into `out` (V, F) rows."""
    cdef double[:, ::1] o = out
    cdef const long long[:, ::1] ii = np.ascontiguousarray(idx, dtype=np.int64)
    cdef const double[:, ::1] ww = np.ascontiguousarray(w, dtype=np.float64)
    cdef const double[:, ::1] up = np.ascontiguousarray(upstream, dtype=np.float64)
    cdef Py_ssize_t b, k, f, n = ii.shape[0], nf = o.shape[1]
    cdef double wk
    cdef long long row
    for b in range(n):
        for k in range(8):
            row = ii[b, k]
            wk = ww[b, k]
            for f in range(nf):
                o[row, f] += wk * up[b, f]
