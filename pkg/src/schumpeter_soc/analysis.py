"""Waiting-time statistics: plateaus, histograms and tail-family fits.

The fitters follow the scikit-learn estimator conventions (``fit`` returns
``self``, fitted attributes end in ``_``, ``score`` is the total
log-likelihood) so they can be cloned, grid-searched and used in pipelines.
Both families are discrete and normalised on ``tau >= tau_min``, which makes
their log-likelihoods directly comparable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np
from scipy.optimize import minimize_scalar
from scipy.special import zeta
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_is_fitted, column_or_1d

from .exceptions import InsufficientDataError

__all__ = [
    "Family",
    "Verdict",
    "Normalization",
    "Linear",
    "Logarithmic",
    "Histogram",
    "DiversitySeries",
    "FitReport",
    "DurationAnalysis",
    "check_durations",
    "detect_plateaus",
    "PlateauCounter",
    "PlateauExtractor",
    "cumulative_activity",
    "histogram",
    "ExponentialFit",
    "PowerLawFit",
    "fit_exponential",
    "fit_powerlaw",
    "compare_families",
    "analyze_durations",
]

MIN_SAMPLES = 100
DEFAULT_TAU_MIN = 2
DEFAULT_THRESHOLD = 0.01


class Family(str, enum.Enum):
    EXPONENTIAL = "Exponential"
    POWER_LAW = "PowerLaw"


class Verdict(str, enum.Enum):
    EXPONENTIAL = "ExponentialPreferred"
    POWER_LAW = "PowerLawPreferred"
    INCONCLUSIVE = "Inconclusive"


class Normalization(str, enum.Enum):
    COUNTS = "counts"
    DENSITY = "density"


@dataclass(frozen=True)
class Linear:
    width: int = 1

    def __post_init__(self):
        if int(self.width) != self.width or self.width < 1:
            raise ValueError(f"linear bin width must be a positive integer, got {self.width}")


@dataclass(frozen=True)
class Logarithmic:
    ratio: float = 2.0

    def __post_init__(self):
        if not self.ratio > 1:
            raise ValueError(f"logarithmic bin ratio must exceed 1, got {self.ratio}")


@dataclass
class Histogram:
    """Integer-edged histogram; bins are ``[lo, hi)``."""

    bin_edges: np.ndarray
    counts: np.ndarray
    normalization: Normalization = Normalization.DENSITY

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.bin_edges)

    @property
    def density(self) -> np.ndarray:
        total = self.counts.sum()
        if total == 0:
            return np.zeros(self.counts.size)
        return self.counts / (total * self.widths)

    @property
    def values(self) -> np.ndarray:
        if self.normalization is Normalization.DENSITY:
            return self.density
        return self.counts

    def midpoints(self) -> np.ndarray:
        """Mean of the integers covered by each bin."""
        return (self.bin_edges[:-1] + self.bin_edges[1:] - 1) / 2.0

    def geometric_centers(self) -> np.ndarray:
        """Geometric mean of the smallest and largest integer in each bin."""
        return np.sqrt(self.bin_edges[:-1] * (self.bin_edges[1:] - 1.0))


@dataclass
class DiversitySeries:
    values: np.ndarray
    burn_in: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.ndim != 1:
            raise ValueError("series must be one-dimensional")
        if not 0 <= self.burn_in < self.values.size:
            raise ValueError(
                f"burn_in ({self.burn_in}) must be smaller than the series length "
                f"({self.values.size})"
            )

    @classmethod
    def with_burn_in_fraction(cls, values, fraction: float = 0.1) -> "DiversitySeries":
        values = np.asarray(values)
        return cls(values, burn_in_length(values.size, fraction))

    @property
    def analyzed(self) -> np.ndarray:
        return self.values[self.burn_in:]


def burn_in_length(length: int, fraction: float) -> int:
    if not 0.0 <= fraction < 1.0:
        raise ValueError(f"burn-in fraction must lie in [0, 1), got {fraction}")
    return int(round(length * fraction))


@dataclass
class FitReport:
    family: Family
    parameter: float
    tau_min: int
    goodness: float
    log_likelihood: float
    n_tail: int
    alpha_hill: Optional[float] = None
    slope_loglog: Optional[float] = None
    ks_distance: Optional[float] = None


def check_durations(X) -> np.ndarray:
    """Validate positive integer durations and return them as int64."""
    arr = column_or_1d(np.asarray(X), warn=True)
    if arr.size == 0:
        raise ValueError("no durations given")
    if not np.all(np.isfinite(arr)) or np.any(arr != np.round(arr)):
        raise ValueError("durations must be integers")
    arr = arr.astype(np.int64)
    if arr.min() < 1:
        raise ValueError(f"durations must be positive, found {arr.min()}")
    return arr


# --------------------------------------------------------------------------
# Plateaus and staircases
# --------------------------------------------------------------------------

def detect_plateaus(series, burn_in: int = 0) -> np.ndarray:
    """Lengths of the maximal constant runs after ``burn_in``.

    ``series`` may be a :class:`DiversitySeries` (its own burn-in is used)
    or any 1-D sequence.  Works equally for 0/1 single-product trajectories.
    """
    if isinstance(series, DiversitySeries):
        x = series.analyzed
    else:
        x = np.asarray(series)
        if x.ndim != 1:
            raise ValueError("series must be one-dimensional")
        x = x[burn_in:]
    if x.size == 0:
        raise ValueError("analyzed region of the series is empty")
    change = np.flatnonzero(x[1:] != x[:-1])
    bounds = np.concatenate(([-1], change, [x.size - 1]))
    return np.diff(bounds).astype(np.int64)


class PlateauCounter:
    """Streaming run-length encoder for series delivered in chunks.

    Produces the same durations as :func:`detect_plateaus` on the
    concatenated series, while holding only the durations themselves.
    """

    def __init__(self, burn_in: int = 0):
        self.burn_in = int(burn_in)
        self._skip = self.burn_in
        self._value = None
        self._run = 0
        self._done: list[np.ndarray] = []
        self.analyzed_length = 0

    def update(self, chunk) -> None:
        x = np.asarray(chunk)
        if self._skip:
            cut = min(self._skip, x.size)
            self._skip -= cut
            x = x[cut:]
        if x.size == 0:
            return
        self.analyzed_length += x.size
        if self._value is not None and x[0] != self._value:
            self._done.append(np.array([self._run], dtype=np.int64))
            self._run = 0
        change = np.flatnonzero(x[1:] != x[:-1])
        if change.size:
            runs = np.diff(np.concatenate(([-1], change)))
            runs[0] += self._run
            self._done.append(runs.astype(np.int64))
            self._run = x.size - 1 - change[-1]
        else:
            self._run += x.size
        self._value = x[-1]

    def durations(self) -> np.ndarray:
        if self._value is None:
            raise ValueError("analyzed region of the series is empty")
        return np.concatenate(self._done + [np.array([self._run], dtype=np.int64)])


class PlateauExtractor(TransformerMixin, BaseEstimator):
    """Transformer from a trajectory to its plateau durations.

    ``burn_in`` is a fraction of the trajectory length discarded first.
    """

    def __init__(self, burn_in: float = 0.1):
        self.burn_in = burn_in

    def fit(self, X, y=None):
        burn_in_length(1, self.burn_in)
        return self

    def transform(self, X):
        x = column_or_1d(np.asarray(X))
        return detect_plateaus(x, burn_in_length(x.size, self.burn_in))


def cumulative_activity(trajectory) -> np.ndarray:
    """Running count of active steps for one product (a devil's staircase)."""
    x = np.asarray(trajectory)
    if x.ndim != 1 or x.size == 0:
        raise ValueError("trajectory must be a non-empty 1-D sequence")
    if not np.isin(x, (0, 1)).all():
        raise ValueError("trajectory entries must be 0 or 1")
    return np.cumsum(x, dtype=np.int64)


# --------------------------------------------------------------------------
# Histograms
# --------------------------------------------------------------------------

def _log_edges(start: int, stop: int, ratio: float) -> np.ndarray:
    edges = [start]
    k = 1
    while edges[-1] <= stop:
        e = int(np.ceil(start * ratio**k - 1e-9))
        k += 1
        if e > edges[-1]:
            edges.append(e)
    return np.array(edges, dtype=np.int64)


def histogram(data, binning: Union[Linear, Logarithmic] = Logarithmic(),
              normalization: Normalization = Normalization.DENSITY,
              start: int = 1) -> Histogram:
    """Bin positive integers so every datum lands in exactly one bin.

    Logarithmic edges are ``start * ratio**k`` rounded up to integers, with
    repeated edges dropped.  Data below ``start`` are an error.
    """
    x = check_durations(data)
    if x.min() < start:
        raise ValueError(f"datum {x.min()} lies below the first bin edge {start}")
    hi = int(x.max())
    if isinstance(binning, Linear):
        nbins = (hi - start) // binning.width + 1
        edges = start + binning.width * np.arange(nbins + 1, dtype=np.int64)
    elif isinstance(binning, Logarithmic):
        edges = _log_edges(start, hi, binning.ratio)
    else:
        raise TypeError(f"unknown binning {binning!r}")
    idx = np.searchsorted(edges, x, side="right") - 1
    counts = np.bincount(idx, minlength=edges.size - 1).astype(np.int64)
    return Histogram(edges, counts, Normalization(normalization))


def _regress(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    """Least-squares slope and R^2; degenerate inputs give NaN slope, zero R^2."""
    if x.size < 3 or np.ptp(x) == 0:
        return float("nan"), 0.0
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = ((y - y.mean()) ** 2).sum()
    r2 = 1.0 - (resid**2).sum() / ss_tot if ss_tot > 0 else 0.0
    return float(slope), float(r2)


def _bulk(hist: Histogram, min_count: int) -> np.ndarray:
    """Mask of non-empty bins up to the last bin holding ``min_count`` counts."""
    keep = np.zeros(hist.counts.size, dtype=bool)
    full = np.flatnonzero(hist.counts >= min_count)
    if full.size:
        keep[:full[-1] + 1] = True
    return keep & (hist.counts > 0)


# --------------------------------------------------------------------------
# Estimators
# --------------------------------------------------------------------------

def _tail(X, tau_min: int, min_samples: int) -> np.ndarray:
    x = check_durations(X)
    if int(tau_min) != tau_min or tau_min < 1:
        raise ValueError(f"tau_min must be a positive integer, got {tau_min}")
    tail = x[x >= tau_min]
    if tail.size < min_samples:
        raise InsufficientDataError(
            f"need at least {min_samples} durations >= tau_min={tau_min}, got {tail.size}"
        )
    return tail


class ExponentialFit(BaseEstimator):
    """Shifted geometric law ``P(tau) = q (1 - q)**(tau - tau_min)``.

    ``rate_`` is the maximum-likelihood per-step termination probability
    ``q = 1 / (mean(tau) - tau_min + 1)``.  ``r2_`` is the R^2 of a straight
    line through log density on linear bins (``bins_per_efold`` bins per
    ``1/q`` steps), over the bulk up to the last bin with ``min_bin_count``
    counts.
    """

    def __init__(self, tau_min: int = DEFAULT_TAU_MIN, min_samples: int = MIN_SAMPLES,
                 bins_per_efold: int = 2, min_bin_count: int = 10):
        self.tau_min = tau_min
        self.min_samples = min_samples
        self.bins_per_efold = bins_per_efold
        self.min_bin_count = min_bin_count

    def fit(self, X, y=None):
        tail = _tail(X, self.tau_min, self.min_samples)
        excess = tail - self.tau_min
        scale = excess.mean() + 1.0
        q = 1.0 / scale
        self.rate_ = q
        self.tau_min_ = int(self.tau_min)
        self.n_tail_ = int(tail.size)
        self.loglik_ = float(self._logpmf(tail).sum())
        width = max(1, int(np.ceil(scale / self.bins_per_efold)))
        self.histogram_ = histogram(tail, Linear(width), start=self.tau_min_)
        keep = _bulk(self.histogram_, self.min_bin_count)
        self.slope_semilog_, self.r2_ = _regress(
            self.histogram_.midpoints()[keep], np.log(self.histogram_.density[keep])
        )
        return self

    def _logpmf(self, x: np.ndarray) -> np.ndarray:
        q = self.rate_
        excess = (x - self.tau_min_).astype(float)
        if q >= 1.0:
            return np.where(excess == 0, 0.0, -np.inf)
        return np.log(q) + excess * np.log1p(-q)

    def score_samples(self, X) -> np.ndarray:
        check_is_fitted(self)
        x = check_durations(X)
        out = np.full(x.size, -np.inf)
        ok = x >= self.tau_min_
        out[ok] = self._logpmf(x[ok])
        return out

    def score(self, X, y=None) -> float:
        return float(self.score_samples(X).sum())

    def report(self) -> FitReport:
        check_is_fitted(self)
        return FitReport(Family.EXPONENTIAL, float(self.rate_), self.tau_min_,
                         min(max(self.r2_, 0.0), 1.0), self.loglik_, self.n_tail_)


def _powerlaw_mle(tail: np.ndarray, tau_min: int, bounds) -> tuple[float, float]:
    m = tail.size
    sum_log = np.log(tail).sum()

    def nll(a):
        return a * sum_log + m * np.log(zeta(a, tau_min))

    res = minimize_scalar(nll, bounds=bounds, method="bounded",
                          options={"xatol": 1e-8})
    return float(res.x), float(-res.fun)


def _hill(tail: np.ndarray, tau_min: int) -> float:
    return float(1.0 + tail.size / np.log(tail / (tau_min - 0.5)).sum())


def _ks_distance(tail: np.ndarray, alpha: float, tau_min: int) -> float:
    vals, counts = np.unique(tail, return_counts=True)
    # survival P(tau >= v), empirical and model, at every observed value
    emp = 1.0 - np.concatenate(([0], np.cumsum(counts)[:-1])) / tail.size
    model = zeta(alpha, vals) / zeta(alpha, tau_min)
    emp_next = emp - counts / tail.size
    model_next = zeta(alpha, vals + 1) / zeta(alpha, tau_min)
    return float(max(np.abs(emp - model).max(), np.abs(emp_next - model_next).max()))


class PowerLawFit(BaseEstimator):
    """Discrete power law ``P(tau) = tau**-alpha / zeta(alpha, tau_min)``.

    ``alpha_`` is the exact maximum-likelihood exponent; ``alpha_hill_`` the
    closed-form approximation ``1 + m / sum(log(tau / (tau_min - 0.5)))``.
    ``slope_`` is the least-squares slope of log density against log bin
    centre on logarithmic bins (ratio ``log_ratio``), over bins starting at
    or above ``tau_min`` up to the last one with ``min_bin_count`` counts.

    ``tau_min="auto"`` picks the cutoff minimising the Kolmogorov-Smirnov
    distance among up to ``max_candidates`` observed values that leave at
    least ``min_samples`` points in the tail.
    """

    def __init__(self, tau_min: Union[int, str] = DEFAULT_TAU_MIN,
                 min_samples: int = MIN_SAMPLES, log_ratio: float = 2.0,
                 min_bin_count: int = 10, alpha_bounds=(1.0 + 1e-6, 10.0),
                 max_candidates: int = 50):
        self.tau_min = tau_min
        self.min_samples = min_samples
        self.log_ratio = log_ratio
        self.min_bin_count = min_bin_count
        self.alpha_bounds = alpha_bounds
        self.max_candidates = max_candidates

    def _select_tau_min(self, x: np.ndarray) -> int:
        vals = np.unique(x)
        tail_sizes = x.size - np.searchsorted(np.sort(x), vals)
        cands = vals[tail_sizes >= self.min_samples]
        if cands.size == 0:
            raise InsufficientDataError(
                f"need at least {self.min_samples} durations, got {x.size}"
            )
        cands = cands[:self.max_candidates]
        best, best_d = int(cands[0]), np.inf
        for c in cands:
            tail = x[x >= c]
            a, _ = _powerlaw_mle(tail, int(c), self.alpha_bounds)
            d = _ks_distance(tail, a, int(c))
            if d < best_d:
                best, best_d = int(c), d
        return best

    def fit(self, X, y=None):
        x = check_durations(X)
        tau_min = self._select_tau_min(x) if self.tau_min == "auto" else self.tau_min
        tail = _tail(x, tau_min, self.min_samples)
        self.tau_min_ = int(tau_min)
        self.n_tail_ = int(tail.size)
        self.alpha_, self.loglik_ = _powerlaw_mle(tail, self.tau_min_, self.alpha_bounds)
        self.alpha_hill_ = _hill(tail, self.tau_min_)
        self.ks_ = _ks_distance(tail, self.alpha_, self.tau_min_)
        self.histogram_ = histogram(x, Logarithmic(self.log_ratio))
        keep = _bulk(self.histogram_, self.min_bin_count)
        keep &= self.histogram_.bin_edges[:-1] >= self.tau_min_
        self.slope_, self.slope_r2_ = _regress(
            np.log(self.histogram_.geometric_centers()[keep]),
            np.log(self.histogram_.density[keep]),
        )
        return self

    def score_samples(self, X) -> np.ndarray:
        check_is_fitted(self)
        x = check_durations(X)
        out = np.full(x.size, -np.inf)
        ok = x >= self.tau_min_
        out[ok] = -self.alpha_ * np.log(x[ok]) - np.log(zeta(self.alpha_, self.tau_min_))
        return out

    def score(self, X, y=None) -> float:
        return float(self.score_samples(X).sum())

    def report(self) -> FitReport:
        check_is_fitted(self)
        return FitReport(Family.POWER_LAW, self.alpha_, self.tau_min_,
                         min(max(self.slope_r2_, 0.0), 1.0), self.loglik_, self.n_tail_,
                         alpha_hill=self.alpha_hill_, slope_loglog=self.slope_,
                         ks_distance=self.ks_)


def fit_exponential(durations, tau_min: int = DEFAULT_TAU_MIN, **kwargs) -> FitReport:
    return ExponentialFit(tau_min=tau_min, **kwargs).fit(durations).report()


def fit_powerlaw(durations, tau_min: Union[int, str] = DEFAULT_TAU_MIN, **kwargs) -> FitReport:
    return PowerLawFit(tau_min=tau_min, **kwargs).fit(durations).report()


@dataclass
class DurationAnalysis:
    verdict: Verdict
    exponential: Optional[FitReport]
    powerlaw: Optional[FitReport]
    log_likelihood_ratio: float = float("nan")
    n_durations: int = 0
    histogram: Optional[Histogram] = field(default=None, repr=False)

    @property
    def normalized_ratio(self) -> float:
        n = self.powerlaw.n_tail if self.powerlaw else 0
        return self.log_likelihood_ratio / n if n else float("nan")


def analyze_durations(durations, tau_min: Union[int, str] = DEFAULT_TAU_MIN,
                      threshold: float = DEFAULT_THRESHOLD,
                      min_samples: int = MIN_SAMPLES,
                      binning: Union[Linear, Logarithmic] = Logarithmic()) -> DurationAnalysis:
    """Fit both families at a common cutoff and pick the likelier one.

    The power-law fit sets the cutoff (relevant for ``tau_min="auto"``).  A
    per-sample log-likelihood ratio with magnitude below ``threshold``, or
    fewer than ``min_samples`` tail points, yields ``Inconclusive``.
    """
    x = check_durations(durations)
    hist = histogram(x, binning)
    try:
        pl = PowerLawFit(tau_min=tau_min, min_samples=min_samples).fit(x)
    except InsufficientDataError:
        return DurationAnalysis(Verdict.INCONCLUSIVE, None, None,
                                n_durations=x.size, histogram=hist)
    ex = ExponentialFit(tau_min=pl.tau_min_, min_samples=min_samples).fit(x)
    ratio = pl.loglik_ - ex.loglik_
    per_sample = ratio / pl.n_tail_
    if abs(per_sample) < threshold:
        verdict = Verdict.INCONCLUSIVE
    elif per_sample > 0:
        verdict = Verdict.POWER_LAW
    else:
        verdict = Verdict.EXPONENTIAL
    return DurationAnalysis(verdict, ex.report(), pl.report(), float(ratio), x.size, hist)


def compare_families(durations, tau_min: Union[int, str] = DEFAULT_TAU_MIN,
                     threshold: float = DEFAULT_THRESHOLD,
                     min_samples: int = MIN_SAMPLES) -> Verdict:
    return analyze_durations(durations, tau_min, threshold, min_samples).verdict
