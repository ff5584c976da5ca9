# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: pivoted complex LU and the grid nearest-neighbor scan.

Behavioural parity with _fallback.py is load-bearing; the test suite and
benchmarks run both backends against each other.
"""
import numpy as np

BACKEND = "cython"


def lu_factor(a, double rel_tol=1e-13):
    lu_arr = np.array(a, dtype=np.complex128, order="C")
    cdef Py_ssize_t n = lu_arr.shape[0]
    perm_arr = np.arange(n, dtype=np.int64)
    if n == 0:
        return lu_arr, perm_arr, -1

    cdef double complex[:, ::1] lu = lu_arr
    cdef long long[::1] perm = perm_arr
    cdef Py_ssize_t i, j, k, jbest
    cdef double amax = 0.0, mag, best, thr
    cdef double complex piv, factor, tmp
    cdef long long ptmp

    for i in range(n):
        for j in range(n):
            mag = lu[i, j].real * lu[i, j].real + lu[i, j].imag * lu[i, j].imag
            if mag > amax:
                amax = mag
    if amax == 0.0:
        return lu_arr, perm_arr, 0
    thr = rel_tol * rel_tol * amax  # squared-modulus comparison

    for k in range(n):
        best = -1.0
        jbest = k
        for i in range(k, n):
            mag = lu[i, k].real * lu[i, k].real + lu[i, k].imag * lu[i, k].imag
            if mag > best:
                best = mag
                jbest = i
        if best < thr:
            return lu_arr, perm_arr, k
        if jbest != k:
            for j in range(n):
                tmp = lu[k, j]
                lu[k, j] = lu[jbest, j]
                lu[jbest, j] = tmp
            ptmp = perm[k]
            perm[k] = perm[jbest]
            perm[jbest] = ptmp
        piv = lu[k, k]
        for i in range(k + 1, n):
            factor = lu[i, k] / piv
            lu[i, k] = factor
            for j in range(k + 1, n):
                lu[i, j] = lu[i, j] - factor * lu[k, j]
    return lu_arr, perm_arr, -1


def lu_solve_factored(lu_in, perm_in, b):
    cdef bint squeeze = b.ndim == 1
    lu_arr = np.ascontiguousarray(lu_in, dtype=np.complex128)
    perm_arr = np.ascontiguousarray(perm_in, dtype=np.int64)
    x_arr = np.array(b, dtype=np.complex128, order="C")
    if squeeze:
        x_arr = x_arr[:, None]
    x_arr = np.ascontiguousarray(x_arr[np.asarray(perm_arr), :])

    cdef double complex[:, ::1] lu = lu_arr
    cdef double complex[:, ::1] x = x_arr
    cdef Py_ssize_t n = lu.shape[0], nrhs = x.shape[1]
    cdef Py_ssize_t i, j, r
    cdef double complex acc

    for r in range(nrhs):
        for i in range(1, n):
            acc = 0
            for j in range(i):
                acc = acc + lu[i, j] * x[j, r]
            x[i, r] = x[i, r] - acc
        for i in range(n - 1, -1, -1):
            acc = 0
            for j in range(i + 1, n):
                acc = acc + lu[i, j] * x[j, r]
            x[i, r] = (x[i, r] - acc) / lu[i, i]
    return x_arr[:, 0] if squeeze else x_arr


def grid_argmin(tvals, xi):
    tv_arr = np.ascontiguousarray(tvals, dtype=np.complex128)
    xi_arr = np.ascontiguousarray(xi, dtype=np.complex128)
    cdef double complex[:, ::1] tv = tv_arr
    cdef double complex[::1] z = xi_arr
    cdef Py_ssize_t ng = tv.shape[0], m = tv.shape[1]
    cdef Py_ssize_t g, j, best_g = 0
    cdef double d, dre, dim, best = -1.0

    for g in range(ng):
        d = 0.0
        for j in range(m):
            dre = tv[g, j].real - z[j].real
            dim = tv[g, j].imag - z[j].imag
            d += dre * dre + dim * dim
        if best < 0.0 or d < best:
            best = d
            best_g = g
    return best_g
