"""Coupled plant/observer simulation: the stable linear filter, state
reconstruction by transform inversion (closed-form coefficient stack or
grid nearest-neighbor pseudo-inverse), and trajectory recording.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from kkl import _kernels, linalg, systems
from kkl.design import FilterDesign, StackedCoeffTransform
from kkl.errors import DomainEscape


def filter_step(filt: FilterDesign, xi, y) -> np.ndarray:
    """One step xi+ = A xi + B y, in the realization matching the state.

    A state of length m runs the complex-diagonal realization; length 2m
    runs the real block embedding (outputs must be real there).
    """
    y = np.atleast_1d(np.asarray(y))
    if len(y) != filt.p:
        raise ValueError(f"output has length {len(y)}, filter expects {filt.p}")
    xi = np.asarray(xi)
    if xi.shape == (filt.m,):
        return filt.a_complex @ xi.astype(np.complex128) + filt.b_complex @ y
    if xi.shape == (2 * filt.m,):
        return filt.a_real @ xi.astype(np.float64) + filt.b_real @ np.real(y)
    raise ValueError(
        f"filter state must have length {filt.m} (complex) or "
        f"{2 * filt.m} (real embedding), got {xi.shape}")


# ------------------------------------------------------------ inversion

def stack_matrix(rows) -> np.ndarray:
    """4x4 reconstruction matrix [[1,0,1,1], [a_i, c_i, d_i, e_i]].

    Acting on (x1^2 - x2^2, x1 x2, x1, x2), the first row reproduces the
    quadratic output and each coefficient row reproduces one transform
    component (the rows have b_i = -a_i, so the two quadratics collapse
    into the single x1^2 - x2^2 unknown).
    """
    rows = tuple(rows)
    if len(rows) != 3:
        raise ValueError(f"need exactly 3 coefficient rows, got {len(rows)}")
    mat = np.empty((4, 4))
    mat[0] = (1.0, 0.0, 1.0, 1.0)
    for i, row in enumerate(rows):
        mat[i + 1] = (row.a, row.c, row.d, row.e)
    return mat


class LinearStackInverter:
    """Reconstruction by solving the stacked 4x4 linear system.

    The matrix is factored once at construction (the pivot test rejects
    degenerate eigenvalue choices); each inversion solves for
    (x1^2 - x2^2, x1 x2, x1, x2) and keeps the last two entries -- the
    quadratic unknowns are discarded rather than fused.
    """

    def __init__(self, rows):
        self.rows = tuple(rows)
        self.matrix = stack_matrix(self.rows)
        self._lu, self._perm = linalg.lu_factor(self.matrix)

    def invert(self, xi, y) -> np.ndarray:
        rhs = np.empty(4, dtype=np.complex128)
        rhs[0] = np.atleast_1d(y)[0]
        rhs[1:] = np.asarray(xi, dtype=np.complex128)
        sol = linalg.lu_solve_factored(self._lu, self._perm, rhs)
        return sol[2:].real


def invert_linear_stack(coeff_rows, y, t_values) -> np.ndarray:
    """One-shot reconstruction from three transform estimates."""
    return LinearStackInverter(coeff_rows).invert(t_values, y)


class GridInverter:
    """Nearest-neighbor pseudo-inverse over a fixed domain grid.

    Transform values are tabulated once over the grid (enumerated in
    lexicographic order); inversion returns the grid point whose image is
    closest to the filter state, ties resolving to the lexicographically
    smallest point. A concrete, deterministic stand-in for the
    Lipschitz-modulus extension of T^-1.
    """

    def __init__(self, transform, domain_box, pitch: float):
        if pitch <= 0:
            raise ValueError("pitch must be positive")
        self.pitch = float(pitch)
        self.grid = systems.box_grid(systems.as_box(domain_box), self.pitch)
        self.table = np.ascontiguousarray(
            np.stack([transform.eval(x) for x in self.grid]),
            dtype=np.complex128)

    def invert(self, xi, y=None) -> np.ndarray:
        idx = _kernels.grid_argmin(self.table,
                                   np.asarray(xi, dtype=np.complex128))
        return self.grid[idx].copy()


def invert_grid_nn(transform, xi, domain_box, pitch: float) -> np.ndarray:
    """One-shot grid pseudo-inverse (tabulates the grid on every call;
    use GridInverter for repeated inversions)."""
    return GridInverter(transform, domain_box, pitch).invert(xi)


# ------------------------------------------------------------- observer

@dataclass(frozen=True)
class ObserverConfig:
    """Filter + transform + inversion choice for one observer."""
    filt: FilterDesign
    transform: object
    inversion: str = "grid"
    grid_pitch: float = 0.05

    def __post_init__(self):
        if self.inversion not in ("linear_stack", "grid"):
            raise ValueError(f"unknown inversion {self.inversion!r}")
        if self.inversion == "linear_stack":
            if not isinstance(self.transform, StackedCoeffTransform):
                raise ValueError(
                    "linear_stack inversion requires the closed-form "
                    "coefficient transform")
            # pivot test at construction; degenerate rows fail here
            LinearStackInverter(self.transform.rows)

    def make_inverter(self, sys: systems.DiscreteSystem):
        if self.inversion == "linear_stack":
            return LinearStackInverter(self.transform.rows)
        return GridInverter(self.transform, sys.domain_box, self.grid_pitch)


@dataclass(frozen=True)
class TrajectoryRecord:
    """Time-indexed record of one coupled plant/observer run."""
    dt: float
    steps: int
    k: np.ndarray
    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    xhat: np.ndarray
    err: np.ndarray
    filter_err: np.ndarray

    def __post_init__(self):
        if len(self.k) != self.steps + 1:
            raise ValueError("record must hold steps+1 rows")
        for name in ("err", "filter_err"):
            vals = getattr(self, name)
            if not np.isfinite(vals).all() or (vals < 0).any():
                raise ValueError(f"{name} must be nonnegative and finite")

    def to_csv(self, path) -> None:
        n = self.x.shape[1]
        header = (["k", "t"] + [f"x{i + 1}" for i in range(n)]
                  + [f"xhat{i + 1}" for i in range(n)] + ["err", "filter_err"])
        lines = [",".join(header)]
        for i in range(len(self.k)):
            vals = [f"{self.t[i]:.17g}"]
            vals += [f"{v:.17g}" for v in self.x[i]]
            vals += [f"{v:.17g}" for v in self.xhat[i]]
            vals += [f"{self.err[i]:.17g}", f"{self.filter_err[i]:.17g}"]
            lines.append(",".join([str(int(self.k[i]))] + vals))
        with open(path, "w", encoding="ascii", newline="\n") as fh:
            fh.write("\n".join(lines) + "\n")


def simulate(sys: systems.DiscreteSystem, obs: ObserverConfig, x0, xi0,
             K: int) -> TrajectoryRecord:
    """Run plant and observer jointly for K steps (K+1 recorded rows).

    The plant evolves independently of the observer (read-only coupling).
    xi0 may be None or 0 (zero state, real realization), a real vector of
    length 2m (real realization), or a complex vector of length m.
    Raises DomainEscape when the plant leaves the doubled domain box.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    x = np.asarray(x0, dtype=np.float64)
    if x.shape != (sys.n,):
        raise ValueError(f"x0 must have length {sys.n}")
    if not systems.box_contains(sys.initial_box, x, rtol=1e-12):
        raise ValueError("x0 must lie in the initial-condition box")
    filt = obs.filt
    if xi0 is None or np.isscalar(xi0):
        fill = 0.0 if xi0 is None else float(xi0)
        xi = np.full(2 * filt.m, fill)
    else:
        xi = np.asarray(xi0)
        if np.iscomplexobj(xi) and xi.shape == (filt.m,):
            xi = xi.astype(np.complex128)
        elif xi.shape == (2 * filt.m,):
            xi = xi.astype(np.float64)
        elif xi.shape == (filt.m,):
            xi = xi.astype(np.complex128)
        else:
            raise ValueError(
                f"xi0 must have length {filt.m} or {2 * filt.m}")
    real_realization = xi.dtype == np.float64

    inverter = obs.make_inverter(sys)
    escape_box = systems.inflate_box(sys.domain_box, 2.0)

    kk = np.arange(K + 1)
    tt = kk * sys.dt
    xs = np.empty((K + 1, sys.n))
    xis = np.empty((K + 1, xi.shape[0]), dtype=xi.dtype)
    xhats = np.empty((K + 1, sys.n))
    errs = np.empty(K + 1)
    ferrs = np.empty(K + 1)

    for k in range(K + 1):
        y = sys.output(x)
        xi_c = filt.complex_state(xi) if real_realization else xi
        ferrs[k] = float(np.linalg.norm(xi_c - obs.transform.eval(x)))
        xhat = inverter.invert(xi_c, y)
        xs[k] = x
        xis[k] = xi
        xhats[k] = xhat
        errs[k] = float(np.linalg.norm(x - xhat))
        if k < K:
            xi = filter_step(filt, xi, y)
            x = sys.step(x)
            if not systems.box_contains(escape_box, x):
                raise DomainEscape(
                    f"plant state {x} left the doubled domain box at step {k + 1}")
    return TrajectoryRecord(dt=sys.dt, steps=K, k=kk, t=tt, x=xs, xi=xis,
                            xhat=xhats, err=errs, filter_err=ferrs)
