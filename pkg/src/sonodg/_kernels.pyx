# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled assembly kernels (hot inner loops of the time steppers).

Mirrors the contracts of ``_kernels_py``; single precision of truth is
the pure backend, checked by tests that run both.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND = "cython"


def mass_blocks(double[:, ::1] cw, double[:, ::1] phi):
    cdef Py_ssize_t ne = cw.shape[0], nq = cw.shape[1], nloc = phi.shape[1]
    out_arr = np.zeros((ne, nloc, nloc))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t e, q, i, j
    cdef double w, wphi
    for e in range(ne):
        for q in range(nq):
            w = cw[e, q]
            if w == 0.0:
                continue
            for i in range(nloc):
                wphi = w * phi[q, i]
                for j in range(nloc):
                    out[e, i, j] += wphi * phi[q, j]
    return out_arr


def stiffness_blocks(double[:, ::1] dw, double[:, :, :, ::1] grads):
    cdef Py_ssize_t ne = dw.shape[0], nq = dw.shape[1], nloc = grads.shape[2]
    out_arr = np.zeros((ne, nloc, nloc))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t e, q, i, j
    cdef double w, gx, gy
    for e in range(ne):
        for q in range(nq):
            w = dw[e, q]
            for i in range(nloc):
                gx = w * grads[e, q, i, 0]
                gy = w * grads[e, q, i, 1]
                for j in range(nloc):
                    out[e, i, j] += gx * grads[e, q, j, 0] + gy * grads[e, q, j, 1]
    return out_arr


def sip_face_blocks(double[:, ::1] wq, double[:, :, :, ::1] svals,
                    double[:, :, :, ::1] flux, double[::1] pen):
    cdef Py_ssize_t nf = wq.shape[0], nq = wq.shape[1], nloc = svals.shape[3]
    out_arr = np.zeros((nf, 2, 2, nloc, nloc))
    cdef double[:, :, :, :, ::1] out = out_arr
    cdef Py_ssize_t f, t, s, q, i, j
    cdef double w, pf, a, b, c
    for f in range(nf):
        pf = pen[f]
        for t in range(2):
            for s in range(2):
                for q in range(nq):
                    w = wq[f, q]
                    for i in range(nloc):
                        a = w * svals[f, t, q, i]
                        b = w * flux[f, t, q, i]
                        c = pf * a
                        for j in range(nloc):
                            out[f, t, s, i, j] += (
                                c * svals[f, s, q, j]
                                - a * flux[f, s, q, j]
                                - b * svals[f, s, q, j])
    return out_arr


def upwind_face_blocks(double[:, ::1] wqvn, double[:, :, :, ::1] svals,
                       double[:, :, ::1] upvals):
    cdef Py_ssize_t nf = wqvn.shape[0], nq = wqvn.shape[1], nloc = svals.shape[3]
    out_arr = np.zeros((nf, 2, nloc, nloc))
    cdef double[:, :, :, ::1] out = out_arr
    cdef Py_ssize_t f, t, q, i, j
    cdef double a
    for f in range(nf):
        for t in range(2):
            for q in range(nq):
                for i in range(nloc):
                    a = wqvn[f, q] * svals[f, t, q, i]
                    for j in range(nloc):
                        out[f, t, i, j] += a * upvals[f, q, j]
    return out_arr


def face_mass_blocks(double[:, ::1] wq, double[:, :, ::1] vals):
    cdef Py_ssize_t nf = wq.shape[0], nq = wq.shape[1], nloc = vals.shape[2]
    out_arr = np.zeros((nf, nloc, nloc))
    cdef double[:, :, ::1] out = out_arr
    cdef Py_ssize_t f, q, i, j
    cdef double a
    for f in range(nf):
        for q in range(nq):
            for i in range(nloc):
                a = wq[f, q] * vals[f, q, i]
                for j in range(nloc):
                    out[f, i, j] += a * vals[f, q, j]
    return out_arr


def scatter_add(double[::1] data, pos, vals):
    cdef cnp.int64_t[::1] p = np.ascontiguousarray(pos, dtype=np.int64).ravel()
    cdef double[::1] v = np.ascontiguousarray(vals, dtype=np.float64).ravel()
    cdef Py_ssize_t k, n = p.shape[0]
    for k in range(n):
        data[p[k]] += v[k]
