# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled battery-ladder kernels (same contracts as ``_ladder_py``).

Complex arrays are processed as interleaved (re, im) doubles to keep the
inner loops free of C99 complex-multiply overhead.
"""

import numpy as np
cimport numpy as cnp

cnp.import_array()


def shift_accumulate(C, m, phi):
    c_arr = np.ascontiguousarray(C, dtype=np.complex128)
    p_arr = np.ascontiguousarray(phi, dtype=np.complex128)
    cdef long long[:, ::1] mm = np.ascontiguousarray(m, dtype=np.int64)
    cdef Py_ssize_t d_out = c_arr.shape[0], d_in = c_arr.shape[1]
    cdef Py_ssize_t n = p_arr.shape[1], nb = p_arr.shape[2]
    cdef double[:, ::1] c = c_arr.view(np.float64)
    cdef double[:, :, ::1] p = p_arr.view(np.float64)
    out_arr = np.zeros((d_out, n, nb), dtype=np.complex128)
    cdef double[:, :, ::1] out = out_arr.view(np.float64)
    cdef Py_ssize_t i, j, w, b, tgt
    cdef long long s
    cdef double cr, ci, pr, pi
    for i in range(d_in):
        for j in range(d_out):
            cr = c[j, 2 * i]
            ci = c[j, 2 * i + 1]
            if cr == 0 and ci == 0:
                continue
            s = mm[i, j] % n
            if s < 0:
                s += n
            for w in range(n):
                tgt = w + s
                if tgt >= n:
                    tgt -= n
                for b in range(nb):
                    pr = p[i, w, 2 * b]
                    pi = p[i, w, 2 * b + 1]
                    out[j, tgt, 2 * b] += cr * pr - ci * pi
                    out[j, tgt, 2 * b + 1] += cr * pi + ci * pr
    return out_arr


def shifted_overlaps(psi, shifts):
    v_arr = np.ascontiguousarray(psi, dtype=np.complex128)
    cdef double[::1] v = v_arr.view(np.float64)
    sh = np.asarray(shifts, dtype=np.int64)
    cdef long long[::1] ks = np.ascontiguousarray(sh.ravel())
    cdef Py_ssize_t n = v_arr.shape[0], nk = ks.shape[0]
    res_arr = np.zeros(nk, dtype=np.complex128)
    cdef double[::1] res = res_arr.view(np.float64)
    cdef Py_ssize_t q, w, tgt
    cdef long long s
    cdef double ar, ai, br, bi, accr, acci
    for q in range(nk):
        s = ks[q] % n
        if s < 0:
            s += n
        accr = 0.0
        acci = 0.0
        for w in range(n):
            tgt = w + s
            if tgt >= n:
                tgt -= n
            ar = v[2 * tgt]
            ai = -v[2 * tgt + 1]
            br = v[2 * w]
            bi = v[2 * w + 1]
            accr += ar * br - ai * bi
            acci += ar * bi + ai * br
        res[2 * q] = accr
        res[2 * q + 1] = acci
    return res_arr.reshape(sh.shape)
