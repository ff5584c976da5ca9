"""Kernel backend selection.

The compiled core is used when it imported successfully; setting
KKL_PURE_PYTHON=1 (or a failed build) selects the pure-Python fallback.
Both expose lu_factor / lu_solve_factored / grid_argmin with identical
semantics; BACKEND names the active one.
"""
import os

if os.environ.get("KKL_PURE_PYTHON", "").strip() in ("1", "true", "yes"):
    from kkl._kernels import _fallback as _impl
else:
    try:
        from kkl._kernels import _core as _impl  # type: ignore[attr-defined]
    except ImportError:
        from kkl._kernels import _fallback as _impl

BACKEND = _impl.BACKEND
lu_factor = _impl.lu_factor
lu_solve_factored = _impl.lu_solve_factored
grid_argmin = _impl.grid_argmin

__all__ = ["BACKEND", "lu_factor", "lu_solve_factored", "grid_argmin"]
