# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled modal-series kernels. Mirrors :mod:`roreg._kernels_py` exactly."""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()


def modal_sum(const double complex[:] lams, const double[:] eig,
              const double complex[:, :] gamma, const double complex[:, :] beta,
              int power=1):
    """out[q, i, j] = sum_m gamma[i, m] * beta[m, j] / (lams[q] - eig[m])**power"""
    cdef Py_ssize_t nq = lams.shape[0], nm = eig.shape[0]
    cdef Py_ssize_t p = gamma.shape[0], mi = beta.shape[1]
    cdef Py_ssize_t q, m, i, j, e
    cdef double complex w, d
    out_arr = np.zeros((nq, p, mi), dtype=np.complex128)
    cdef double complex[:, :, :] out = out_arr
    for q in range(nq):
        for m in range(nm):
            d = lams[q] - eig[m]
            w = 1.0 / d
            for e in range(1, power):
                w = w / d
            for i in range(p):
                for j in range(mi):
                    out[q, i, j] = out[q, i, j] + gamma[i, m] * beta[m, j] * w
    return out_arr


def inverse_distance_sum(const double complex[:] lams, const double[:] eig):
    """out[q] = sum_m 1 / |lams[q] - eig[m]|"""
    cdef Py_ssize_t nq = lams.shape[0], nm = eig.shape[0]
    cdef Py_ssize_t q, m
    cdef double acc, re, im
    out_arr = np.empty(nq, dtype=np.float64)
    cdef double[:] out = out_arr
    for q in range(nq):
        acc = 0.0
        for m in range(nm):
            re = lams[q].real - eig[m]
            im = lams[q].imag
            acc += 1.0 / sqrt(re * re + im * im)
        out[q] = acc
    return out_arr


def min_distance(const double complex[:] lams, const double[:] eig):
    """out[q] = min_m |lams[q] - eig[m]|"""
    cdef Py_ssize_t nq = lams.shape[0], nm = eig.shape[0]
    cdef Py_ssize_t q, m
    cdef double best, dist, re, im
    out_arr = np.empty(nq, dtype=np.float64)
    cdef double[:] out = out_arr
    for q in range(nq):
        best = 1e308
        for m in range(nm):
            re = lams[q].real - eig[m]
            im = lams[q].imag
            dist = sqrt(re * re + im * im)
            if dist < best:
                best = dist
        out[q] = best
    return out_arr
