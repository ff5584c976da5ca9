"""Pure-Python/numpy kernels, semantically identical to the compiled core.

Selected by kkl._kernels when the extension is unavailable or when
KKL_PURE_PYTHON=1. Every routine here must keep exact behavioural parity
with _core.pyx: same pivot rule, same failure index, same tie-breaking.
"""
import numpy as np

BACKEND = "python"


def lu_factor(a, rel_tol=1e-13):
    """LU with partial pivoting on a square complex matrix.

    Returns (lu, perm, fail): combined L\\U factors, the row permutation
    (row i of the factored matrix is original row perm[i]), and the
    elimination step at which the pivot modulus fell below
    rel_tol * max|a_ij| (-1 when the factorization completed). An all-zero
    matrix fails at step 0.
    """
    lu = np.array(a, dtype=np.complex128, order="C")
    n = lu.shape[0]
    perm = np.arange(n, dtype=np.int64)
    if n == 0:
        return lu, perm, -1
    amax = float(np.max(np.abs(lu)))
    if amax == 0.0:
        return lu, perm, 0
    thr = rel_tol * amax
    for k in range(n):
        j = k + int(np.argmax(np.abs(lu[k:, k])))
        if abs(lu[j, k]) < thr:
            return lu, perm, k
        if j != k:
            lu[[k, j], :] = lu[[j, k], :]
            perm[k], perm[j] = perm[j], perm[k]
        piv = lu[k, k]
        if k + 1 < n:
            lu[k + 1:, k] /= piv
            lu[k + 1:, k + 1:] -= np.outer(lu[k + 1:, k], lu[k, k + 1:])
    return lu, perm, -1


def lu_solve_factored(lu, perm, b):
    """Solve using factors from lu_factor; b is (n,) or (n, nrhs)."""
    squeeze = b.ndim == 1
    x = np.array(b, dtype=np.complex128)
    if squeeze:
        x = x[:, None]
    x = x[perm, :]
    n = lu.shape[0]
    for i in range(1, n):
        x[i, :] -= lu[i, :i] @ x[:i, :]
    for i in range(n - 1, -1, -1):
        if i + 1 < n:
            x[i, :] -= lu[i, i + 1:] @ x[i + 1:, :]
        x[i, :] /= lu[i, i]
    return x[:, 0] if squeeze else x


def grid_argmin(tvals, xi):
    """Index of the row of tvals closest to xi in squared 2-norm.

    Ties resolve to the smallest index (rows are enumerated in
    lexicographic grid order, so this is the lexicographic tie-break).
    """
    d = tvals - xi[None, :]
    return int(np.argmin(np.einsum("ij,ij->i", d.real, d.real)
                         + np.einsum("ij,ij->i", d.imag, d.imag)))
