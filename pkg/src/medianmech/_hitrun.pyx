# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hit-and-run stepping kernel.

Same contract and random-block layout as the pure-NumPy fallback in
_hitrun_py.py (steps outer, chains inner).
"""

import numpy as np

from libc.math cimport INFINITY


def advance(double[:, ::1] a, double[::1] b, double[:, ::1] x, double[:, ::1] ax,
            double[:, :, ::1] normals, double[:, ::1] uniforms,
            double[::1] dir_tol, double margin, long countdown, long thin,
            double[:, :, ::1] out, long out_pos):
    """Advance every chain one step per random row; record every `thin` steps.

    Mutates x (chains, dim) and ax (chains, n_con); fills out
    (slots, chains, dim) from slot out_pos once countdown reaches zero.
    Returns (countdown, n_recorded).
    """
    cdef Py_ssize_t steps = normals.shape[0]
    cdef Py_ssize_t chains = x.shape[0]
    cdef Py_ssize_t dim = x.shape[1]
    cdef Py_ssize_t ncon = a.shape[0]
    cdef Py_ssize_t s, c, k, j
    cdef double t_lo, t_hi, au_k, slack, ratio, t, width, u
    cdef long recorded = 0
    scratch_np = np.empty(ncon, dtype=np.float64)
    cdef double[::1] au = scratch_np

    for s in range(steps):
        for c in range(chains):
            t_lo = -INFINITY
            t_hi = INFINITY
            for k in range(ncon):
                au_k = 0.0
                for j in range(dim):
                    au_k += a[k, j] * normals[s, c, j]
                au[k] = au_k
                slack = b[k] - ax[c, k]
                if slack < 0.0:
                    slack = 0.0
                if au_k > dir_tol[k]:
                    ratio = slack / au_k
                    if ratio < t_hi:
                        t_hi = ratio
                elif au_k < -dir_tol[k]:
                    ratio = slack / au_k
                    if ratio > t_lo:
                        t_lo = ratio
            width = t_hi - t_lo
            if width > 0.0 and width < INFINITY and t_lo <= 0.0 and t_hi >= 0.0:
                u = uniforms[s, c]
                t = t_lo + (margin + (1.0 - 2.0 * margin) * u) * width
            else:
                t = 0.0
            if t != 0.0:
                for j in range(dim):
                    x[c, j] += t * normals[s, c, j]
                for k in range(ncon):
                    ax[c, k] += t * au[k]
        countdown -= 1
        if countdown == 0:
            for c in range(chains):
                for j in range(dim):
                    out[out_pos + recorded, c, j] = x[c, j]
            recorded += 1
            countdown = thin
    return countdown, recorded
