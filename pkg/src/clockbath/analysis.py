"""Fits and ensemble aggregation of coherence curves.

Decay envelopes are fitted to the stretched exponential

    |L(t)| = exp[-(t / T2)^n],

and decoupling scans T2(N) to the power law T2 ~ N^eta (least squares in
log-log space).  Ensemble results aggregate into histogram grids of T2
per scan-axis value.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import least_squares

from .cce import CoherenceCurve

_N_BOUNDS = (0.2, 6.0)


@dataclass
class FitResult:
    t2: float
    exponent_n: float
    residual_rms: float
    converged: bool

    def as_dict(self) -> dict:
        return {"t2_s": self.t2, "exponent_n": self.exponent_n,
                "residual_rms": self.residual_rms, "converged": self.converged}


@dataclass
class ScalingResult:
    eta: float
    prefactor: float
    fits: list[tuple[int, float]]

    def as_dict(self) -> dict:
        return {"eta": self.eta, "prefactor_s": self.prefactor,
                "t2_by_n": [[n, t2] for n, t2 in self.fits]}


def _stretched(t: np.ndarray, t2: float, n: float) -> np.ndarray:
    out = np.zeros_like(t)
    pos = t > 0
    out[pos] = np.exp(-np.power(t[pos] / t2, n))
    out[~pos] = 1.0
    return out


def fit_stretched_exponential(curve: CoherenceCurve) -> FitResult:
    """Damped least-squares fit of |L(t)| to exp[-(t/T2)^n].

    Initial guess: T2 at the first 1/e crossing (linear interpolation),
    n = 2.  A curve that never falls below 0.9 is flagged non-converged
    with T2 reported as the last grid time (a lower bound).
    """
    t = np.asarray(curve.times, dtype=float)
    y = np.abs(np.asarray(curve.values))
    if y.min() > 0.9:
        return FitResult(t2=float(t[-1]), exponent_n=math.nan,
                         residual_rms=math.nan, converged=False)

    target = 1.0 / math.e
    below = np.flatnonzero(y <= target)
    if below.size:
        i = below[0]
        if i == 0:
            t2_guess = max(t[0], t[-1] * 1e-6)
        else:
            f = (y[i - 1] - target) / max(y[i - 1] - y[i], 1e-30)
            t2_guess = t[i - 1] + f * (t[i] - t[i - 1])
    else:
        t2_guess = t[-1]
    t2_guess = max(t2_guess, t[t > 0].min() if np.any(t > 0) else 1e-9)

    def residuals(p):
        return _stretched(t, p[0], p[1]) - y

    sol = least_squares(residuals, x0=[t2_guess, 2.0],
                        bounds=([1e-12, _N_BOUNDS[0]], [np.inf, _N_BOUNDS[1]]),
                        xtol=1e-8, ftol=1e-12, gtol=1e-12, max_nfev=200)
    rms = float(np.sqrt(np.mean(sol.fun ** 2)))
    converged = bool(sol.status > 0)
    # a T2 beyond the sampled window is an extrapolation, not a measurement
    if sol.x[0] > t[-1]:
        converged = False
    return FitResult(t2=float(sol.x[0]), exponent_n=float(sol.x[1]),
                     residual_rms=rms, converged=converged)


def fit_power_law(t2_by_n: list[tuple[int, float]]) -> ScalingResult:
    """Least-squares line in (ln N, ln T2): eta is the slope."""
    if len(t2_by_n) < 3:
        raise ValueError("power-law fit needs at least 3 points")
    ns = np.array([p[0] for p in t2_by_n], dtype=float)
    t2s = np.array([p[1] for p in t2_by_n], dtype=float)
    if np.any(ns <= 0) or np.any(t2s <= 0):
        raise ValueError("power-law fit needs positive N and T2 values")
    slope, intercept = np.polyfit(np.log(ns), np.log(t2s), 1)
    return ScalingResult(eta=float(slope), prefactor=float(math.exp(intercept)),
                         fits=[(int(n), float(t2)) for n, t2 in t2_by_n])


@dataclass
class HistogramGrid:
    """Counts of fitted T2 per scan-axis value, with ensemble-mean markers."""

    axis_values: np.ndarray
    bin_edges: np.ndarray         # T2 bin edges, seconds
    counts: np.ndarray            # (n_axis, n_bins)
    mean_t2: np.ndarray           # (n_axis,), nan where all fits failed
    n_failed: np.ndarray          # (n_axis,)

    def as_dict(self) -> dict:
        return {
            "axis_values": [float(x) for x in self.axis_values],
            "bin_edges_s": [float(x) for x in self.bin_edges],
            "counts": self.counts.astype(int).tolist(),
            "mean_t2_s": [None if math.isnan(x) else float(x) for x in self.mean_t2],
            "n_failed": self.n_failed.astype(int).tolist(),
        }


def aggregate_histogram(fits_per_axis: list[list[FitResult]], axis_values,
                        n_bins: int = 40) -> HistogramGrid:
    """Histogram converged T2 values on a common logarithmic binning.

    Bins span the full range of converged T2 across all axis values; the
    per-axis mean marker is the arithmetic mean of converged T2.  Cells
    where every fit failed are flagged through n_failed and a nan mean.
    """
    axis_values = np.asarray(axis_values, dtype=float)
    if len(fits_per_axis) != len(axis_values):
        raise ValueError("one fit list required per axis value")
    ok_t2 = [f.t2 for fits in fits_per_axis for f in fits if f.converged and f.t2 > 0]
    if not ok_t2:
        raise ValueError("no converged fits to aggregate")
    lo, hi = min(ok_t2), max(ok_t2)
    if hi <= lo:
        lo, hi = lo * 0.5, hi * 2.0
    edges = np.geomspace(lo * 0.999, hi * 1.001, n_bins + 1)

    counts = np.zeros((len(axis_values), n_bins))
    mean_t2 = np.full(len(axis_values), np.nan)
    n_failed = np.zeros(len(axis_values))
    for i, fits in enumerate(fits_per_axis):
        good = [f.t2 for f in fits if f.converged and f.t2 > 0]
        n_failed[i] = len(fits) - len(good)
        if good:
            counts[i], _ = np.histogram(good, bins=edges)
            mean_t2[i] = float(np.mean(good))
    return HistogramGrid(axis_values=axis_values, bin_edges=edges, counts=counts,
                         mean_t2=mean_t2, n_failed=n_failed)


def ensemble_t2(curves: list[CoherenceCurve], mean_curve: CoherenceCurve,
                mode: str = "mean-of-fits") -> tuple[float, float, list[FitResult]]:
    """Ensemble T2 statistic: mean of per-member fits, or fit of the mean curve.

    Returns (t2, exponent_n, per-member fits).  In mean-of-fits mode the
    exponent is the mean exponent of the converged fits.
    """
    fits = [fit_stretched_exponential(c) for c in curves if c is not None]
    if mode == "fit-of-mean":
        mean_fit = fit_stretched_exponential(mean_curve)
        return mean_fit.t2, mean_fit.exponent_n, fits
    if mode != "mean-of-fits":
        raise ValueError(f"unknown ensemble statistic mode {mode!r}")
    good = [f for f in fits if f.converged]
    if not good:
        return math.nan, math.nan, fits
    return (float(np.mean([f.t2 for f in good])),
            float(np.mean([f.exponent_n for f in good])), fits)
