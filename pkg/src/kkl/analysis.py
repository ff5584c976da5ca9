"""Post-processing of trajectory records into reported numbers:
log-linear convergence rates, error floors, oscillation bands, and the
series-vs-polynomial unicity cross-check.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from kkl import design, systems
from kkl.errors import AllZeroError, EmptyWindow
from kkl.runtime import TrajectoryRecord

LOG_FLOOR = 1e-14  # rows below this are arithmetic noise, excluded from fits


@dataclass(frozen=True)
class ConvergenceReport:
    slope_log10_per_time: float
    regression_window: tuple[float, float]
    r_squared: float
    error_floor: float
    final_error: float

    def to_dict(self) -> dict:
        return {
            "slope": self.slope_log10_per_time,
            "r_squared": self.r_squared,
            "window": list(self.regression_window),
            "error_floor": self.error_floor,
            "final_error": self.final_error,
        }


def convergence_report(traj: TrajectoryRecord, t0: float = 0.5,
                       t1: float = 3.0) -> ConvergenceReport:
    """Least-squares fit of log10(err) against t on [t0, t1].

    Rows with err <= 1e-14 are excluded from the fit (log of arithmetic
    noise); the floor and final error come from the whole run.
    """
    if not t1 > t0:
        raise ValueError("need t1 > t0")
    in_window = (traj.t >= t0) & (traj.t <= t1)
    if int(np.count_nonzero(in_window)) < 10:
        raise EmptyWindow(
            f"window [{t0}, {t1}] holds {int(np.count_nonzero(in_window))} "
            "rows; need at least 10")
    err = traj.err[in_window]
    if np.all(err == 0.0):
        raise AllZeroError("errors identically zero on the window")
    usable = err > LOG_FLOOR
    if int(np.count_nonzero(usable)) < 2:
        raise EmptyWindow("fewer than 2 rows above the arithmetic floor")
    tt = traj.t[in_window][usable]
    le = np.log10(err[usable])
    basis = np.stack([tt, np.ones_like(tt)], axis=1)
    (slope, intercept), *_ = np.linalg.lstsq(basis, le, rcond=None)
    fit = basis @ (slope, intercept)
    ss_res = float(np.sum((le - fit) ** 2))
    ss_tot = float(np.sum((le - np.mean(le)) ** 2))
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return ConvergenceReport(
        slope_log10_per_time=float(slope),
        regression_window=(t0, t1),
        r_squared=float(min(max(r2, 0.0), 1.0)),
        error_floor=float(np.min(traj.err)),
        final_error=float(traj.err[-1]))


@dataclass(frozen=True)
class OscillationBand:
    min: float
    median: float
    max: float

    def to_dict(self) -> dict:
        return {"min": self.min, "median": self.median, "max": self.max}


def oscillation_band(traj: TrajectoryRecord, t0: float) -> OscillationBand:
    """Order statistics of the error tail on [t0, end]."""
    tail = traj.err[traj.t >= t0]
    if tail.size == 0:
        raise EmptyWindow(f"no rows at or after t = {t0}")
    return OscillationBand(min=float(np.min(tail)),
                           median=float(np.median(tail)),
                           max=float(np.max(tail)))


@dataclass(frozen=True)
class UnicityReport:
    """Series-vs-polynomial agreement against the truncation tail bound."""
    deviations: np.ndarray
    max_deviation: float
    tail_bound: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "max_deviation": self.max_deviation,
            "tail_bound": self.tail_bound,
            "passed": self.passed,
            "samples": int(self.deviations.size),
        }


def unicity_report(sys: systems.DiscreteSystem, filt: design.FilterDesign,
                   n_terms: int, sample_count: int, seed: int) -> UnicityReport:
    """Compare the truncated series against the Sylvester transform.

    Both routes target the same unique continuous solution of the
    functional equation, so their gap at any sampled point is bounded by
    the series truncation tail. Points are drawn from the initial box,
    which the backward map keeps inside the domain.
    """
    poly = design.poly_transform(sys, filt)
    series = design.series_transform(sys, filt, n_terms=n_terms)
    rng = np.random.default_rng(seed)
    pts = systems.sample_box(sys.initial_box, rng, sample_count)
    devs = np.array([
        float(np.linalg.norm(series.eval(x) - poly.eval(x))) for x in pts])
    bound = series.tail_bound
    return UnicityReport(deviations=devs,
                         max_deviation=float(devs.max()),
                         tail_bound=bound,
                         passed=bool(devs.max() <= bound))
