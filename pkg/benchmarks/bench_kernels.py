"""Benchmark the compiled kernels against the pure-Python fallback.

Times LU factor+solve and the grid nearest-neighbor scan on sizes that
bracket typical observer workloads, and checks both backends agree.

Run from the repo root after an editable install:

    python benchmarks/bench_kernels.py
"""
from __future__ import annotations

import time

import numpy as np

from kkl._kernels import _fallback

try:
    from kkl._kernels import _core
except ImportError:
    _core = None


def _time(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_lu(mod, a, b, repeats):
    def run():
        lu, perm, fail = mod.lu_factor(a.copy(), 1e-13)
        assert fail < 0
        mod.lu_solve_factored(lu, perm, b.copy())
    return _time(run, repeats)


def bench_grid(mod, table, xi, repeats):
    return _time(lambda: mod.grid_argmin(table, xi), repeats)


def main() -> None:
    rng = np.random.default_rng(7)
    rows = []
    max_gap = 0.0

    for n in (20, 60, 150):
        a = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        a += n * np.eye(n)
        b = rng.standard_normal((n, 1)) + 0j
        t_py = bench_lu(_fallback, a, b, repeats=5)
        if _core is not None:
            t_c = bench_lu(_core, a, b, repeats=20)
            lu1, p1, _ = _fallback.lu_factor(a.copy(), 1e-13)
            lu2, p2, _ = _core.lu_factor(a.copy(), 1e-13)
            x1 = _fallback.lu_solve_factored(lu1, p1, b.copy())
            x2 = _core.lu_solve_factored(np.asarray(lu2), np.asarray(p2),
                                         b.copy())
            max_gap = max(max_gap, float(np.max(np.abs(x1 - x2))))
        else:
            t_c = float("nan")
        rows.append((f"lu_solve n={n}", t_py, t_c))

    for g in (10_000, 100_000):
        table = np.ascontiguousarray(
            rng.standard_normal((g, 6)) + 1j * rng.standard_normal((g, 6)))
        xi = rng.standard_normal(6) + 1j * rng.standard_normal(6)
        t_py = bench_grid(_fallback, table, xi, repeats=5)
        if _core is not None:
            t_c = bench_grid(_core, table, xi, repeats=20)
            i1 = _fallback.grid_argmin(table, xi)
            i2 = _core.grid_argmin(table, xi)
            assert i1 == i2, (i1, i2)
        else:
            t_c = float("nan")
        rows.append((f"grid_argmin G={g} m=6", t_py, t_c))

    print(f"{'kernel':28s} {'python (s)':>12s} {'cython (s)':>12s} {'speedup':>9s}")
    for name, t_py, t_c in rows:
        speed = f"{t_py / t_c:8.1f}x" if t_c == t_c and t_c > 0 else "      n/a"
        print(f"{name:28s} {t_py:12.6f} {t_c:12.6f} {speed:>9s}")
    if _core is None:
        print("\ncompiled backend not available; fallback only")
    else:
        print(f"\nmax lu_solve agreement gap: {max_gap:.3e}")


if __name__ == "__main__":
    main()
