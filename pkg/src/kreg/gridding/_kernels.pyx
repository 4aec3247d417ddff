# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled gridding hot loops (see _kernels_py.py for the reference)."""

import numpy as np

cimport numpy as cnp

cnp.import_array()


def interpolate(const cnp.complex128_t[:, :, ::1] grid, plan):
    cdef const cnp.intp_t[:, ::1] ix = plan.indices[0]
    cdef const cnp.intp_t[:, ::1] iy = plan.indices[1]
    cdef const cnp.intp_t[:, ::1] iz = plan.indices[2]
    cdef const double[:, ::1] wx = plan.weights[0]
    cdef const double[:, ::1] wy = plan.weights[1]
    cdef const double[:, ::1] wz = plan.weights[2]
    cdef Py_ssize_t w = plan.width
    cdef Py_ssize_t m = ix.shape[0]
    out_arr = np.zeros(m, dtype=np.complex128)
    cdef cnp.complex128_t[::1] out = out_arr
    cdef Py_ssize_t j, a, b, c
    cdef double wa, wab, wabc
    cdef cnp.complex128_t acc
    for j in range(m):
        acc = 0
        for a in range(w):
            wa = wx[j, a]
            if wa == 0.0:
                continue
            for b in range(w):
                wab = wa * wy[j, b]
                for c in range(w):
                    wabc = wab * wz[j, c]
                    acc = acc + wabc * grid[ix[j, a], iy[j, b], iz[j, c]]
        out[j] = acc
    return out_arr


def spread(values, plan, grid_shape):
    cdef const cnp.intp_t[:, ::1] ix = plan.indices[0]
    cdef const cnp.intp_t[:, ::1] iy = plan.indices[1]
    cdef const cnp.intp_t[:, ::1] iz = plan.indices[2]
    cdef const double[:, ::1] wx = plan.weights[0]
    cdef const double[:, ::1] wy = plan.weights[1]
    cdef const double[:, ::1] wz = plan.weights[2]
    cdef Py_ssize_t w = plan.width
    cdef Py_ssize_t m = ix.shape[0]
    vals_arr = np.ascontiguousarray(values, dtype=np.complex128)
    cdef const cnp.complex128_t[::1] vals = vals_arr
    grid_arr = np.zeros(grid_shape, dtype=np.complex128)
    cdef cnp.complex128_t[:, :, ::1] grid = grid_arr
    cdef Py_ssize_t j, a, b, c
    cdef double wa, wab
    cdef cnp.complex128_t v, vab
    for j in range(m):
        v = vals[j]
        for a in range(w):
            wa = wx[j, a]
            if wa == 0.0:
                continue
            for b in range(w):
                wab = wa * wy[j, b]
                vab = wab * v
                for c in range(w):
                    grid[ix[j, a], iy[j, b], iz[j, c]] = (
                        grid[ix[j, a], iy[j, b], iz[j, c]] + wz[j, c] * vab
                    )
    return grid_arr
