"""Minimal dense real/complex matrix kernel.

Matrices are 2-D numpy arrays; everything is carried as complex128 with
exactly-zero imaginary parts standing in for real matrices, so a single
code path serves the complex diagonal filters and their real block
embeddings. The LU and Sylvester routines are hand-rolled because their
failure contract (relative pivot threshold signalling spectrum
intersection) is part of the library's public behaviour; products, norms
and Kronecker products delegate to numpy.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from kkl import _kernels
from kkl.errors import SingularMatrix

PIVOT_REL_TOL = 1e-13


def as_matrix(a) -> np.ndarray:
    """Validate and return a as a 2-D complex128 matrix.

    Raises ValueError on wrong rank or non-finite entries.
    """
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    if not np.isfinite(m.real).all() or not np.isfinite(m.imag).all():
        raise ValueError("matrix entries must be finite")
    return m


def as_vector(x) -> np.ndarray:
    v = np.asarray(x, dtype=np.complex128).ravel()
    if not np.isfinite(v.real).all() or not np.isfinite(v.imag).all():
        raise ValueError("vector entries must be finite")
    return v


def mat_mul(a, b) -> np.ndarray:
    """Matrix product with an explicit dimension check."""
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(
            f"dimension mismatch: ({a.shape[0]}x{a.shape[1]}) @ "
            f"({b.shape[0]}x{b.shape[1]})")
    return a @ b


def lu_factor(a, rel_tol: float = PIVOT_REL_TOL):
    """Pivoted LU of a square matrix; raises SingularMatrix per contract.

    A pivot whose modulus falls below rel_tol times the largest initial
    entry modulus aborts the factorization (an all-zero matrix fails at
    step 0). Returns (lu, perm) suitable for lu_solve_factored.
    """
    a = as_matrix(a)
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"matrix must be square, got {a.shape}")
    lu, perm, fail = _kernels.lu_factor(a, rel_tol)
    if fail >= 0:
        raise SingularMatrix(
            f"pivot modulus below {rel_tol:g} x max entry at "
            f"elimination step {fail}")
    return lu, perm


def lu_solve_factored(lu, perm, b) -> np.ndarray:
    return _kernels.lu_solve_factored(lu, perm, np.asarray(b, dtype=np.complex128))


def lu_solve(a, b) -> np.ndarray:
    """Solve a X = b by LU with partial pivoting.

    b may be a vector or a matrix of stacked right-hand sides.
    """
    a = as_matrix(a)
    b_arr = np.asarray(b, dtype=np.complex128)
    if b_arr.shape[0] != a.shape[0]:
        raise ValueError(
            f"right-hand side has {b_arr.shape[0]} rows, matrix has {a.shape[0]}")
    lu, perm = lu_factor(a)
    return lu_solve_factored(lu, perm, b_arr)


def kron(a, b) -> np.ndarray:
    """Kronecker product; (i,j) block of the result is a[i,j] * b."""
    return np.kron(as_matrix(a), as_matrix(b))


def solve_sylvester(d_mat, a_mat, rhs) -> np.ndarray:
    """Solve M d_mat = a_mat M + rhs by dense vectorization.

    Column-stacking vec turns the equation into
    (d_mat^T (x) I_m - I_k (x) a_mat) vec(M) = vec(rhs); the system is
    solved with the pivoted LU, whose SingularMatrix failure signals
    intersecting spectra of d_mat and -a_mat. Sizes stay small here
    (k*m unknowns), so O((k*m)^3) is acceptable and dependency-free.
    """
    d_mat = as_matrix(d_mat)
    a_mat = as_matrix(a_mat)
    rhs = as_matrix(rhs)
    k = d_mat.shape[0]
    m = a_mat.shape[0]
    if d_mat.shape != (k, k) or a_mat.shape != (m, m):
        raise ValueError("coefficient matrices must be square")
    if rhs.shape != (m, k):
        raise ValueError(
            f"right-hand side must be {m}x{k}, got {rhs.shape[0]}x{rhs.shape[1]}")
    big = np.kron(d_mat.T, np.eye(m)) - np.kron(np.eye(k), a_mat)
    try:
        vec = lu_solve(big, rhs.flatten(order="F"))
    except SingularMatrix as exc:
        raise SingularMatrix(
            "vectorized system is numerically singular: the spectra of the "
            "lift matrix and the filter matrix intersect") from exc
    return vec.reshape((m, k), order="F")


def real_embed(lam: complex) -> np.ndarray:
    """2x2 real block acting on (Re z, Im z) as multiplication by lam."""
    lam = complex(lam)
    return np.array([[lam.real, -lam.imag], [lam.imag, lam.real]])


def two_norm(x) -> float:
    return float(np.linalg.norm(np.asarray(x).ravel()))


def operator_norm(a) -> float:
    """Spectral (2-) norm."""
    return float(np.linalg.norm(as_matrix(a), 2))


@dataclass(frozen=True)
class SpectrumInfo:
    """Eigenvalues of a matrix built block-diagonally from known values."""
    eigenvalues: tuple[complex, ...]
    spectral_radius: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(
            self, "spectral_radius",
            max((abs(v) for v in self.eigenvalues), default=0.0))
