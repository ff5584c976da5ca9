"""Observer ingredients: sampled stable eigenvalues, filter matrices in
complex-diagonal and real-embedded form, the coordinate transformation by
truncated backward series and by Sylvester solve, the oscillator's
closed-form coefficient families, and the residual/injectivity
diagnostics used to accept or resample a design.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from kkl import linalg, systems
from kkl.errors import (DomainEscape, DuplicateEigenvalues, InjectivityWarning,
                        SamplingFailure, StabilityViolation)

INJECTIVITY_WARN_THRESHOLD = 1e-8


# ----------------------------------------------------------- filter

@dataclass(frozen=True)
class FilterDesign:
    """Stable linear filter xi+ = A xi + B y.

    A is diag(eigenvalues) (x) I_p and B is b_scale * (1,...,1)* (x) I_p;
    a_real/b_real realize the same dynamics in real arithmetic, each
    eigenvalue contributing a [[Re,-Im],[Im,Re]] block whose state rows
    carry (Re xi_i, Im xi_i). b_scale is 1 for the canonical design and
    dt for the worked example's filters.
    """
    eigenvalues: tuple[complex, ...]
    p: int = 1
    b_scale: float = 1.0
    a_complex: np.ndarray = field(init=False, repr=False)
    b_complex: np.ndarray = field(init=False, repr=False)
    a_real: np.ndarray = field(init=False, repr=False)
    b_real: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        eigs = tuple(complex(v) for v in self.eigenvalues)
        object.__setattr__(self, "eigenvalues", eigs)
        q = len(eigs)
        if q == 0:
            raise ValueError("need at least one eigenvalue")
        if self.p < 1:
            raise ValueError("output dimension must be >= 1")
        for i in range(q):
            for j in range(i + 1, q):
                if abs(eigs[i] - eigs[j]) <= 1e-6:
                    raise DuplicateEigenvalues(
                        f"eigenvalues {i} and {j} closer than 1e-6")
        if self.spectral_radius >= 1.0:
            raise StabilityViolation(
                f"spectral radius {self.spectral_radius:.6g} is not < 1")
        eye_p = np.eye(self.p)
        object.__setattr__(
            self, "a_complex", np.kron(np.diag(eigs), eye_p))
        object.__setattr__(
            self, "b_complex",
            self.b_scale * np.kron(np.ones((q, 1)), eye_p).astype(np.complex128))
        blocks = np.zeros((2 * q, 2 * q))
        selector = np.zeros((2 * q, 1))
        for i, lam in enumerate(eigs):
            blocks[2 * i:2 * i + 2, 2 * i:2 * i + 2] = linalg.real_embed(lam)
            selector[2 * i, 0] = 1.0
        object.__setattr__(self, "a_real", np.kron(blocks, eye_p))
        object.__setattr__(
            self, "b_real", self.b_scale * np.kron(selector, eye_p))

    @property
    def m(self) -> int:
        return len(self.eigenvalues) * self.p

    @property
    def spectral_radius(self) -> float:
        return max(abs(v) for v in self.eigenvalues)

    @property
    def spectrum(self) -> linalg.SpectrumInfo:
        return linalg.SpectrumInfo(self.eigenvalues)

    @property
    def a_diagonal(self) -> np.ndarray:
        return np.diag(self.a_complex)

    def real_state(self, z) -> np.ndarray:
        """Real-embedded state carrying (Re, Im) of a complex state."""
        z = np.asarray(z, dtype=np.complex128)
        out = np.empty(2 * self.m)
        for i in range(len(self.eigenvalues)):
            out[2 * i * self.p:(2 * i + 1) * self.p] = z[i * self.p:(i + 1) * self.p].real
            out[(2 * i + 1) * self.p:(2 * i + 2) * self.p] = z[i * self.p:(i + 1) * self.p].imag
        return out

    def complex_state(self, v) -> np.ndarray:
        """Complex state recovered from its real embedding."""
        v = np.asarray(v, dtype=np.float64)
        out = np.empty(self.m, dtype=np.complex128)
        for i in range(len(self.eigenvalues)):
            re = v[2 * i * self.p:(2 * i + 1) * self.p]
            im = v[(2 * i + 1) * self.p:(2 * i + 2) * self.p]
            out[i * self.p:(i + 1) * self.p] = re + 1j * im
        return out


def build_filter(eigs, p: int = 1, b_scale: float = 1.0,
                 c2: float | None = None) -> FilterDesign:
    """Construct the filter design, enforcing the stability contract.

    When a growth constant c2 is supplied, the spectral radius must also
    stay below 1/c2 so the backward series converges on the domain.
    """
    design = FilterDesign(eigenvalues=tuple(eigs), p=p, b_scale=b_scale)
    if c2 is not None and c2 > 0 and design.spectral_radius * c2 >= 1.0:
        raise StabilityViolation(
            f"spectral radius {design.spectral_radius:.6g} >= 1/c2 = {1.0 / c2:.6g}")
    return design


def sample_eigenvalues(count: int, radius: float, seed: int) -> list[complex]:
    """count eigenvalues drawn uniformly in the open disc of the given radius.

    Rejection sampling from the bounding square; candidates are rejected
    until pairwise distances exceed 1e-6*radius and all moduli exceed
    0.05*radius (near-zero eigenvalues make the transform forget the
    output history). Deterministic given the seed; aborts with
    SamplingFailure after 10^4 candidate draws.
    """
    if not 0 < radius <= 1:
        raise ValueError("radius must lie in (0, 1]")
    if count < 1:
        raise ValueError("count must be >= 1")
    rng = np.random.default_rng(seed)
    accepted: list[complex] = []
    for _ in range(10_000):
        z = complex(rng.uniform(-radius, radius), rng.uniform(-radius, radius))
        if not 0.05 * radius < abs(z) < radius:
            continue
        if any(abs(z - w) <= 1e-6 * radius for w in accepted):
            continue
        accepted.append(z)
        if len(accepted) == count:
            return accepted
    raise SamplingFailure(
        f"could not draw {count} admissible eigenvalues in 10000 attempts")


# ----------------------------------------------------------- transforms

@dataclass(frozen=True)
class PolyTransform:
    """T(x) = M P_d(x) with a complex coefficient matrix over the basis."""
    m_mat: np.ndarray
    basis: systems.MonomialBasis

    def __post_init__(self):
        m = linalg.as_matrix(self.m_mat)
        if m.shape[1] != self.basis.k_d:
            raise ValueError("coefficient matrix must have k_d columns")
        object.__setattr__(self, "m_mat", m)

    @property
    def m(self) -> int:
        return self.m_mat.shape[0]

    def eval(self, x) -> np.ndarray:
        return self.m_mat @ systems.eval_monomials(self.basis, np.asarray(x, dtype=np.float64))

    def eval_many(self, pts: np.ndarray) -> np.ndarray:
        cols = np.stack([systems.eval_monomials(self.basis, x) for x in pts], axis=1)
        return (self.m_mat @ cols).T


def poly_transform(sys, filt: FilterDesign) -> PolyTransform:
    """Transformation via the Sylvester route: solve M D = A M + B H.

    Accepts a LinearPolySystem or a DiscreteSystem carrying one. The
    construction residual is re-checked and must sit at solver precision;
    a SingularMatrix from the solve signals an inadmissible eigenvalue
    tuple and propagates so the caller can resample.
    """
    poly = sys.poly if isinstance(sys, systems.DiscreteSystem) else sys
    if poly is None:
        raise ValueError("system has no linear-dynamics/polynomial-output form")
    if poly.p != filt.p:
        raise ValueError(f"filter expects p={filt.p}, system has p={poly.p}")
    lift = systems.lift_matrix(poly.f_mat, poly.basis)
    rhs = filt.b_complex @ poly.h_mat.astype(np.complex128)
    m_mat = linalg.solve_sylvester(lift, filt.a_complex, rhs)
    residual = np.linalg.norm(m_mat @ lift - filt.a_complex @ m_mat - rhs)
    if residual > 1e-10 * max(1.0, float(np.linalg.norm(rhs))):
        raise ArithmeticError(
            f"Sylvester residual {residual:.3e} exceeds construction tolerance")
    return PolyTransform(m_mat=m_mat, basis=poly.basis)


@dataclass(frozen=True)
class SeriesTransform:
    """Truncated backward series T_N bound to a system and filter.

    T_N(x) sums A^i B h(f^-(i+1)(x)) for i = 0..N; sup_h is the grid
    estimate of sup |h| over the domain (1.1-inflated) entering the
    geometric tail bound.
    """
    system: systems.DiscreteSystem
    filt: FilterDesign
    n_terms: int
    sup_h: float
    tail_bound: float = field(init=False)

    def __post_init__(self):
        if self.n_terms < 0:
            raise ValueError("truncation index must be >= 0")
        object.__setattr__(self, "tail_bound", tail_bound(self, self.n_terms))

    @property
    def m(self) -> int:
        return self.filt.m

    def eval(self, x) -> np.ndarray:
        xb = np.asarray(x, dtype=np.float64)
        diag = self.filt.a_diagonal
        acc = np.zeros(self.filt.m, dtype=np.complex128)
        power = np.ones(self.filt.m, dtype=np.complex128)
        for _ in range(self.n_terms + 1):
            xb = self.system.backward(xb)
            if np.max(np.abs(xb)) > 1e6:
                raise DomainEscape(
                    "backward iterate exceeded modulus 1e6; the domain is "
                    "not backward-stable for this point")
            acc = acc + power * (self.filt.b_complex @ self.system.output(xb))
            power = power * diag
        return acc


def series_transform(sys: systems.DiscreteSystem, filt: FilterDesign,
                     n_terms: int = 200,
                     sup_pitch: float | None = None) -> SeriesTransform:
    box = sys.domain_box
    if sup_pitch is None:
        sup_pitch = float(np.max(box[:, 1] - box[:, 0])) / 80.0
    pts = systems.box_grid(box, sup_pitch)
    sup_h = 1.1 * max(float(np.linalg.norm(sys.output(x))) for x in pts)
    return SeriesTransform(system=sys, filt=filt, n_terms=n_terms, sup_h=sup_h)


def tail_bound(t: SeriesTransform, n_terms: int) -> float:
    """Geometric tail bound rho^(N+1) ||B|| sup|h| / (1 - rho)."""
    rho = t.filt.spectral_radius
    if rho >= 1.0:
        raise StabilityViolation("tail bound requires spectral radius < 1")
    b_norm = linalg.operator_norm(t.filt.b_complex)
    return rho ** (n_terms + 1) * b_norm * t.sup_h / (1.0 - rho)


# ------------------------------------------------- example coefficients

@dataclass(frozen=True)
class ExampleCoeffs:
    """One closed-form coefficient row (a, b, c, d, e) of the oscillator
    observer: T(x) = a x1^2 + b x2^2 + c x1 x2 + d x1 + e x2.

    The continuous variant solves the continuous-time design equations;
    the discrete variant solves the exact discrete-time ones, which shift
    the quadratic coefficients by dt while (d, e) coincide.
    """
    a: float
    b: float
    c: float
    d: float
    e: float
    variant: str
    lam: float
    dt: float

    def eval_scalar(self, x) -> float:
        x1, x2 = float(x[0]), float(x[1])
        return (self.a * x1 * x1 + self.b * x2 * x2 + self.c * x1 * x2
                + self.d * x1 + self.e * x2)


def defining_residuals(co: ExampleCoeffs) -> np.ndarray:
    """Residuals of the five linear design equations the row must solve.

    Continuous: -c = la*a+1, c = la*b-1, 2(a-b) = la*c, -e = la*d+1,
    d = la*e+1. Discrete: -c+b*dt = la*a+1, c+a*dt = la*b-1,
    2(a-b)-c*dt = la*c, and the same two linear-part equations (their dt
    terms cancel identically, which is re-verified here instead of
    trusted).
    """
    la = co.lam
    dt = co.dt if co.variant == "discrete" else 0.0
    return np.array([
        (-co.c + co.b * dt) - (la * co.a + 1.0),
        (co.c + co.a * dt) - (la * co.b - 1.0),
        (2.0 * (co.a - co.b) - co.c * dt) - la * co.c,
        -co.e - (la * co.d + 1.0),
        co.d - (la * co.e + 1.0),
    ])


def example_coeffs(variant: str, lam: float, dt: float = 0.0) -> ExampleCoeffs:
    """Closed-form coefficient row for the oscillator observer."""
    if variant not in ("continuous", "discrete"):
        raise ValueError(f"unknown variant {variant!r}")
    if not lam < 0:
        raise ValueError("eigenvalue parameter must be negative")
    d = (1.0 - lam) / (1.0 + lam * lam)
    e = -(1.0 + lam) / (1.0 + lam * lam)
    if variant == "continuous":
        a = -lam / (4.0 + lam * lam)
        co = ExampleCoeffs(a=a, b=-a, c=-4.0 / (4.0 + lam * lam),
                           d=d, e=e, variant=variant, lam=lam, dt=0.0)
    else:
        if dt < 0:
            raise ValueError("dt must be nonnegative")
        if abs(1.0 + lam * dt) >= 1.0:
            raise StabilityViolation(
                f"discrete mode 1 + lam*dt = {1.0 + lam * dt:.6g} is not a "
                "contraction (need lam*dt in (-2, 0))")
        mu = lam + dt
        a = -mu / (4.0 + mu * mu)
        co = ExampleCoeffs(a=a, b=-a, c=-4.0 / (4.0 + mu * mu),
                           d=d, e=e, variant=variant, lam=lam, dt=dt)
    res = defining_residuals(co)
    if np.max(np.abs(res)) > 1e-12:
        raise ArithmeticError(
            f"coefficient row violates its design equations: {res}")
    return co


@dataclass(frozen=True)
class StackedCoeffTransform:
    """Transform whose components are closed-form coefficient rows."""
    rows: tuple[ExampleCoeffs, ...]

    @property
    def m(self) -> int:
        return len(self.rows)

    def eval(self, x) -> np.ndarray:
        return np.array([row.eval_scalar(x) for row in self.rows],
                        dtype=np.complex128)


def example_filter(lambdas, dt: float) -> FilterDesign:
    """Filters xi_i+ = (1 + lam_i dt) xi_i + dt y used by the example
    observer: eigenvalues 1 + lam_i dt, input scaled by dt."""
    eigs = [1.0 + float(lam) * dt for lam in lambdas]
    return build_filter(eigs, p=1, b_scale=dt)


def example_transform(lambdas, dt: float, variant: str) -> StackedCoeffTransform:
    rows = tuple(example_coeffs(variant, float(lam), dt if variant == "discrete" else 0.0)
                 for lam in lambdas)
    return StackedCoeffTransform(rows=rows)


# ----------------------------------------------------------- diagnostics

def functional_residual(transform, sys: systems.DiscreteSystem,
                        filt: FilterDesign, x) -> float:
    """|T(f(x)) - A T(x) - B h(x)| for any evaluable transform."""
    x = np.asarray(x, dtype=np.float64)
    lhs = transform.eval(sys.step(x))
    rhs = filt.a_complex @ transform.eval(x) + filt.b_complex @ sys.output(x)
    return float(np.linalg.norm(lhs - rhs))


@dataclass(frozen=True)
class InjectivityReport:
    """Empirical injectivity margin over sampled state pairs."""
    pair_distances: np.ndarray
    image_distances: np.ndarray
    min_ratio: float
    weak: bool

    @property
    def ratios(self) -> np.ndarray:
        return self.image_distances / self.pair_distances


def injectivity_probe(transform, sys: systems.DiscreteSystem,
                      pair_count: int = 200, seed: int = 0) -> InjectivityReport:
    """Sample pairs in the domain and record |T(x1)-T(x2)| vs |x1-x2|.

    Pairs closer than 0.01 are resampled. The minimum ratio is the
    empirical injectivity margin; a margin at or below 1e-8 raises
    InjectivityWarning (and the caller should resample eigenvalues).
    """
    rng = np.random.default_rng(seed)
    box = sys.domain_box
    pair_d = np.empty(pair_count)
    image_d = np.empty(pair_count)
    for k in range(pair_count):
        x1 = rng.uniform(box[:, 0], box[:, 1])
        x2 = rng.uniform(box[:, 0], box[:, 1])
        while np.linalg.norm(x1 - x2) < 0.01:
            x2 = rng.uniform(box[:, 0], box[:, 1])
        pair_d[k] = np.linalg.norm(x1 - x2)
        image_d[k] = np.linalg.norm(transform.eval(x1) - transform.eval(x2))
    min_ratio = float(np.min(image_d / pair_d))
    weak = min_ratio <= INJECTIVITY_WARN_THRESHOLD
    if weak:
        warnings.warn(
            f"empirical injectivity margin {min_ratio:.3e} is negligible; "
            "resample the eigenvalues", InjectivityWarning, stacklevel=2)
    return InjectivityReport(pair_distances=pair_d, image_distances=image_d,
                             min_ratio=min_ratio, weak=weak)


def design_with_resampling(sys: systems.DiscreteSystem, count: int,
                           radius: float, seed: int, p: int = 1,
                           margin_threshold: float = INJECTIVITY_WARN_THRESHOLD,
                           max_attempts: int = 5, pair_count: int = 200,
                           c2: float | None = None):
    """Sample eigenvalues, build the Sylvester transform, probe
    injectivity; resample (seed+1, documented) until the margin clears
    the threshold or attempts run out.

    Returns (filter, transform, report, attempts) where attempts is a
    list of {seed, min_ratio or error, accepted} records -- failures are
    never silently accepted.
    """
    attempts: list[dict] = []
    filt = transform = report = None
    for k in range(max_attempts):
        attempt_seed = seed + k
        entry: dict = {"seed": attempt_seed, "accepted": False}
        try:
            eigs = sample_eigenvalues(count, radius, attempt_seed)
            cand_filt = build_filter(eigs, p=p, c2=c2)
            cand_transform = poly_transform(sys, cand_filt)
        except (SamplingFailure, linalg.SingularMatrix, StabilityViolation) as exc:
            entry["error"] = f"{type(exc).__name__}: {exc}"
            attempts.append(entry)
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", InjectivityWarning)
            cand_report = injectivity_probe(cand_transform, sys,
                                            pair_count=pair_count,
                                            seed=attempt_seed)
        entry["min_ratio"] = cand_report.min_ratio
        filt, transform, report = cand_filt, cand_transform, cand_report
        if cand_report.min_ratio > margin_threshold:
            entry["accepted"] = True
            attempts.append(entry)
            break
        attempts.append(entry)
    if filt is None:
        raise SamplingFailure(
            f"no admissible design in {max_attempts} attempts: {attempts}")
    if report.weak:
        warnings.warn(
            f"all {len(attempts)} sampling attempts left the injectivity "
            f"margin at {report.min_ratio:.3e}; keeping the last candidate",
            InjectivityWarning, stacklevel=2)
    return filt, transform, report, attempts


# ---------------------------------------------------------- serialization

def filter_to_dict(filt: FilterDesign) -> dict:
    return {
        "eigenvalues": [[v.real, v.imag] for v in filt.eigenvalues],
        "p": filt.p,
        "b_scale": filt.b_scale,
    }


def filter_from_dict(doc: dict) -> FilterDesign:
    eigs = [complex(re, im) for re, im in doc["eigenvalues"]]
    return build_filter(eigs, p=int(doc.get("p", 1)),
                        b_scale=float(doc.get("b_scale", 1.0)))


def poly_to_dict(t: PolyTransform) -> dict:
    return {
        "m_mat": [[[v.real, v.imag] for v in row] for row in t.m_mat],
        "basis": {
            "n": t.basis.n,
            "degree": t.basis.degree,
            "exponents": [list(e) for e in t.basis.exponents],
        },
    }


def poly_from_dict(doc: dict) -> PolyTransform:
    basis = systems.monomial_basis(int(doc["basis"]["n"]),
                                   int(doc["basis"]["degree"]))
    stored = [tuple(e) for e in doc["basis"]["exponents"]]
    if list(basis.exponents) != stored:
        raise ValueError("stored basis exponents do not match the canonical order")
    m_mat = np.array([[complex(re, im) for re, im in row]
                      for row in doc["m_mat"]], dtype=np.complex128)
    return PolyTransform(m_mat=m_mat, basis=basis)
