"""Discrete-time plants: generic invertible-map systems, the
linear-dynamics/polynomial-output specialization with monomial lifting,
and the built-in Euler-discretized oscillator with quadratic output.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Callable

import numpy as np

from kkl import linalg
from kkl.errors import ConfigError, DegenerateDomain


# ---------------------------------------------------------------- boxes

def as_box(box) -> np.ndarray:
    """Per-coordinate closed intervals as an (n, 2) float array."""
    b = np.asarray(box, dtype=np.float64)
    if b.ndim != 2 or b.shape[1] != 2:
        raise ValueError("box must be an (n, 2) array of [lo, hi] rows")
    if not np.isfinite(b).all():
        raise ValueError("box bounds must be finite")
    if (b[:, 1] < b[:, 0]).any():
        raise ValueError("box has hi < lo on some axis")
    return b


def box_contains(box: np.ndarray, x, rtol: float = 0.0) -> bool:
    x = np.asarray(x, dtype=np.float64)
    pad = rtol * (box[:, 1] - box[:, 0])
    return bool((x >= box[:, 0] - pad).all() and (x <= box[:, 1] + pad).all())


def inflate_box(box: np.ndarray, factor: float) -> np.ndarray:
    mid = 0.5 * (box[:, 0] + box[:, 1])
    half = 0.5 * (box[:, 1] - box[:, 0]) * factor
    return np.stack([mid - half, mid + half], axis=1)


def sample_box(box: np.ndarray, rng: np.random.Generator, count: int) -> np.ndarray:
    return rng.uniform(box[:, 0], box[:, 1], size=(count, box.shape[0]))


def box_grid(box: np.ndarray, pitch: float) -> np.ndarray:
    """All grid points of the given pitch, in lexicographic order."""
    if pitch <= 0:
        raise ValueError("pitch must be positive")
    # clip the accumulated endpoints so every point lies inside the box
    axes = [np.clip(np.arange(lo, hi + 0.5 * pitch, pitch), lo, hi)
            for lo, hi in box]
    pts = np.array(list(itertools.product(*axes)), dtype=np.float64)
    return pts.reshape(-1, box.shape[0])


# ------------------------------------------------------- monomial basis

@dataclass(frozen=True)
class MonomialBasis:
    """Exponent tuples of total degree <= d over n variables.

    Graded-lexicographic order with the constant monomial first; the
    order is fixed globally so serialized coefficient matrices are
    portable between runs.
    """
    n: int
    degree: int
    exponents: tuple[tuple[int, ...], ...]

    @property
    def k_d(self) -> int:
        return len(self.exponents)

    def index(self, exponent: tuple[int, ...]) -> int:
        return self.exponents.index(exponent)


def monomial_basis(n: int, d: int) -> MonomialBasis:
    if n < 1 or d < 1:
        raise ValueError("need n >= 1 and d >= 1")
    exps = [e for e in itertools.product(range(d + 1), repeat=n) if sum(e) <= d]
    exps.sort(key=lambda e: (sum(e), tuple(-v for v in e)))
    return MonomialBasis(n=n, degree=d, exponents=tuple(exps))


def eval_monomials(basis: MonomialBasis, x) -> np.ndarray:
    """P_d(x): all basis monomials evaluated at x, in basis order."""
    x = np.asarray(x)
    if x.shape != (basis.n,):
        raise ValueError(f"state must have length {basis.n}")
    dtype = np.complex128 if np.iscomplexobj(x) else np.float64
    x = x.astype(dtype)
    exps = np.array(basis.exponents)
    return np.prod(x[None, :] ** exps, axis=1)


def lift_matrix(f_mat, basis: MonomialBasis) -> np.ndarray:
    """Matrix D with P_d(Fx) = D P_d(x), by exact multinomial expansion.

    Row r expands the basis-r monomial of Fx: the product of linear forms
    prod_i (sum_j F[i,j] x_j)^(alpha_i) is multiplied out term by term,
    so D is exact up to the rounding of the coefficient products.
    """
    f_mat = linalg.as_matrix(f_mat)
    n = basis.n
    if f_mat.shape != (n, n):
        raise ValueError(f"dynamics matrix must be {n}x{n}")
    lift = np.zeros((basis.k_d, basis.k_d), dtype=np.complex128)
    zero = (0,) * n
    for r, alpha in enumerate(basis.exponents):
        poly: dict[tuple[int, ...], complex] = {zero: 1.0 + 0.0j}
        for i in range(n):
            for _ in range(alpha[i]):
                grown: dict[tuple[int, ...], complex] = {}
                for mono, coeff in poly.items():
                    for j in range(n):
                        fij = f_mat[i, j]
                        if fij == 0:
                            continue
                        key = mono[:j] + (mono[j] + 1,) + mono[j + 1:]
                        grown[key] = grown.get(key, 0.0) + coeff * fij
                poly = grown
        for mono, coeff in poly.items():
            lift[r, basis.index(mono)] = coeff
    return lift


# ------------------------------------------------------------- systems

@dataclass(frozen=True)
class LinearPolySystem:
    """x+ = F x with output y = H P_d(x)."""
    f_mat: np.ndarray
    h_mat: np.ndarray
    basis: MonomialBasis

    def __post_init__(self):
        f = np.asarray(self.f_mat, dtype=np.float64)
        h = np.asarray(self.h_mat, dtype=np.float64)
        if f.shape != (self.basis.n, self.basis.n):
            raise ValueError("dynamics matrix shape does not match the basis")
        if h.ndim != 2 or h.shape[1] != self.basis.k_d:
            raise ValueError("output matrix must have k_d columns")
        linalg.lu_factor(f)  # invertibility via the pivot test
        object.__setattr__(self, "f_mat", f)
        object.__setattr__(self, "h_mat", h)

    @property
    def n(self) -> int:
        return self.basis.n

    @property
    def p(self) -> int:
        return self.h_mat.shape[0]

    def output(self, x) -> np.ndarray:
        return self.h_mat @ eval_monomials(self.basis, np.asarray(x, dtype=np.float64))


@dataclass(frozen=True)
class DiscreteSystem:
    """Invertible plant x+ = f(x), y = h(x) on a compact domain box."""
    n: int
    p: int
    f: Callable[[np.ndarray], np.ndarray]
    f_inv: Callable[[np.ndarray], np.ndarray]
    h: Callable[[np.ndarray], np.ndarray]
    domain_box: np.ndarray
    initial_box: np.ndarray
    dt: float = 1.0
    poly: LinearPolySystem | None = None

    def __post_init__(self):
        dom = as_box(self.domain_box)
        ini = as_box(self.initial_box)
        if dom.shape[0] != self.n or ini.shape[0] != self.n:
            raise ValueError("box dimension does not match state dimension")
        if (ini[:, 0] < dom[:, 0]).any() or (ini[:, 1] > dom[:, 1]).any():
            raise ValueError("initial box must be contained in the domain box")
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        object.__setattr__(self, "domain_box", dom)
        object.__setattr__(self, "initial_box", ini)

    def step(self, x) -> np.ndarray:
        return np.asarray(self.f(np.asarray(x, dtype=np.float64)), dtype=np.float64)

    def backward(self, x) -> np.ndarray:
        return np.asarray(self.f_inv(np.asarray(x, dtype=np.float64)), dtype=np.float64)

    def output(self, x) -> np.ndarray:
        y = np.asarray(self.h(np.asarray(x, dtype=np.float64)), dtype=np.float64)
        return np.atleast_1d(y)


def from_linear_poly(poly: LinearPolySystem, domain_box, initial_box,
                     dt: float = 1.0) -> DiscreteSystem:
    """Wrap a linear-dynamics/polynomial-output system as a DiscreteSystem."""
    lu, perm = linalg.lu_factor(poly.f_mat)

    def f(x):
        return poly.f_mat @ x

    def f_inv(x):
        return linalg.lu_solve_factored(lu, perm, x.astype(np.complex128)).real

    return DiscreteSystem(
        n=poly.n, p=poly.p, f=f, f_inv=f_inv, h=poly.output,
        domain_box=domain_box, initial_box=initial_box, dt=dt, poly=poly)


def make_oscillator_system(dt: float) -> DiscreteSystem:
    """Euler-discretized harmonic oscillator with quadratic output.

    x1+ = x1 + dt*x2, x2+ = x2 - dt*x1, y = x1^2 - x2^2 + x1 + x2.
    The backward map is the exact 2x2 inverse. Default boxes: domain
    [-2,2]^2, initial conditions [-1,1]^2 (the mild Euler expansion keeps
    5-time-unit trajectories from the initial box inside the domain).
    """
    if not 0 < dt < 1:
        raise ValueError("dt must lie in (0, 1)")
    f_mat = np.array([[1.0, dt], [-dt, 1.0]])
    det = 1.0 + dt * dt
    inv = np.array([[1.0, -dt], [dt, 1.0]]) / det

    def f(x):
        return f_mat @ x

    def f_inv(x):
        return inv @ x

    def h(x):
        return np.array([x[0] ** 2 - x[1] ** 2 + x[0] + x[1]])

    basis = monomial_basis(2, 2)
    h_mat = np.zeros((1, basis.k_d))
    h_mat[0, basis.index((1, 0))] = 1.0
    h_mat[0, basis.index((0, 1))] = 1.0
    h_mat[0, basis.index((2, 0))] = 1.0
    h_mat[0, basis.index((0, 2))] = -1.0
    poly = LinearPolySystem(f_mat=f_mat, h_mat=h_mat, basis=basis)
    return DiscreteSystem(
        n=2, p=1, f=f, f_inv=f_inv, h=h,
        domain_box=[[-2.0, 2.0], [-2.0, 2.0]],
        initial_box=[[-1.0, 1.0], [-1.0, 1.0]],
        dt=dt, poly=poly)


# ------------------------------------------------------ growth constants

@dataclass(frozen=True)
class GrowthConstants:
    """Affine growth bounds |f_inv(x)| <= c1 + c2|x|, |h(x)| <= c1p + c2p|x|."""
    c1: float
    c2: float
    c1p: float
    c2p: float


def _fd_jacobian(fun, x: np.ndarray, out_dim: int) -> np.ndarray:
    jac = np.empty((out_dim, x.size))
    for j in range(x.size):
        step = 1e-6 * (1.0 + abs(x[j]))
        xp = x.copy()
        xm = x.copy()
        xp[j] += step
        xm[j] -= step
        jac[:, j] = (np.atleast_1d(fun(xp)) - np.atleast_1d(fun(xm))) / (2 * step)
    return jac


def estimate_growth_constants(sys: DiscreteSystem,
                              grid_pitch: float) -> GrowthConstants:
    """Grid estimate of the growth constants with a 1.1 safety factor.

    c2 and c2p are the largest operator norms of central finite-difference
    Jacobians of f_inv and h over the domain grid, inflated by 1.1;
    c1, c1p are the largest residuals of the affine bounds on the same
    grid. Over-estimating c2 only shrinks the admissible eigenvalue disc.
    """
    box = sys.domain_box
    if np.any(box[:, 1] - box[:, 0] <= 0):
        raise DegenerateDomain("domain box has zero volume")
    pts = box_grid(box, grid_pitch)
    c2 = 0.0
    c2p = 0.0
    for x in pts:
        c2 = max(c2, linalg.operator_norm(_fd_jacobian(sys.backward, x, sys.n)))
        c2p = max(c2p, linalg.operator_norm(_fd_jacobian(sys.output, x, sys.p)))
    c2 *= 1.1
    c2p *= 1.1
    c1 = 0.0
    c1p = 0.0
    for x in pts:
        nx = float(np.linalg.norm(x))
        c1 = max(c1, float(np.linalg.norm(sys.backward(x))) - c2 * nx)
        c1p = max(c1p, float(np.linalg.norm(sys.output(x))) - c2p * nx)
    return GrowthConstants(c1=max(c1, 0.0), c2=c2, c1p=max(c1p, 0.0), c2p=c2p)


def backward_distinguishability_probe(sys: DiscreteSystem, x1, x2,
                                      i_max: int, tol: float = 1e-9) -> int | None:
    """Smallest i in [1, i_max] with |h(f^-i(x1)) - h(f^-i(x2))| > tol.

    Returns None when no backward iterate separates the outputs, which
    signals a possible distinguishability violation, not a hard error.
    """
    a = np.asarray(x1, dtype=np.float64)
    b = np.asarray(x2, dtype=np.float64)
    for i in range(1, i_max + 1):
        a = sys.backward(a)
        b = sys.backward(b)
        if np.linalg.norm(sys.output(a) - sys.output(b)) > tol:
            return i
    return None


# ------------------------------------------------------- deserialization

def system_from_spec(doc: dict) -> DiscreteSystem:
    """Build a system from its JSON description.

    Either {"builtin": "oscillator", "dt": 0.01} or
    {"linear_poly": {"F": [[...]], "H": [[...]], "degree": d}}, with
    optional "domain_box"/"initial_box" arrays of [lo, hi] rows.
    """
    if not isinstance(doc, dict):
        raise ConfigError("system: expected an object")
    if "builtin" in doc and "linear_poly" in doc:
        raise ConfigError("system: give either builtin or linear_poly, not both")
    if "builtin" in doc:
        if doc["builtin"] != "oscillator":
            raise ConfigError(f"system.builtin: unknown builtin {doc['builtin']!r}")
        dt = doc.get("dt", 0.01)
        if not isinstance(dt, (int, float)) or not 0 < dt < 1:
            raise ConfigError("system.dt: must be a number in (0, 1)")
        sys = make_oscillator_system(float(dt))
        dom = doc.get("domain_box")
        ini = doc.get("initial_box")
        if dom is not None or ini is not None:
            dom = as_box(dom) if dom is not None else sys.domain_box
            ini = as_box(ini) if ini is not None else sys.initial_box
            sys = DiscreteSystem(n=sys.n, p=sys.p, f=sys.f, f_inv=sys.f_inv,
                                 h=sys.h, domain_box=dom, initial_box=ini,
                                 dt=sys.dt, poly=sys.poly)
        return sys
    if "linear_poly" in doc:
        lp = doc["linear_poly"]
        for key in ("F", "H", "degree"):
            if key not in lp:
                raise ConfigError(f"system.linear_poly.{key}: missing")
        f_mat = np.asarray(lp["F"], dtype=np.float64)
        if f_mat.ndim != 2 or f_mat.shape[0] != f_mat.shape[1]:
            raise ConfigError("system.linear_poly.F: must be square")
        n = f_mat.shape[0]
        basis = monomial_basis(n, int(lp["degree"]))
        h_mat = np.asarray(lp["H"], dtype=np.float64)
        if h_mat.ndim != 2 or h_mat.shape[1] != basis.k_d:
            raise ConfigError(
                f"system.linear_poly.H: must have {basis.k_d} columns "
                f"(degree {basis.degree} over {n} variables)")
        poly = LinearPolySystem(f_mat=f_mat, h_mat=h_mat, basis=basis)
        dom = as_box(doc.get("domain_box", [[-1.0, 1.0]] * n))
        ini = as_box(doc.get("initial_box", dom))
        return from_linear_poly(poly, dom, ini, dt=float(doc.get("dt", 1.0)))
    raise ConfigError("system: need either 'builtin' or 'linear_poly'")
