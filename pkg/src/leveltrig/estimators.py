"""Streaming moment accumulation, cost-ratio estimators with confidence
intervals, and goodness-of-fit against the Gumbel limit law."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .analytic import GUMBEL_VARIANCE, gumbel_cdf, gumbel_constants
from .records import RunRecord

_Z95 = 1.959963984540054  # two-sided 95% normal quantile


@dataclass
class MomentAccumulator:
    """Single-pass mean/variance state with an exact merge.

    ``m2`` is the running sum of squared deviations (Welford).  When
    ``track_fourth`` is set, ``m4_raw`` additionally accumulates the plain
    sum of fourth powers, used for tracking E[R^4] of terminal radii where
    the values are bounded and cancellation is not a concern.
    """

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0
    m4_raw: float = 0.0
    track_fourth: bool = False

    def add(self, value: float) -> None:
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (value - self.mean)
        if self.track_fourth:
            self.m4_raw += value**4

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        """Combine two accumulators as if their samples were concatenated."""
        if self.track_fourth != other.track_fourth:
            raise ValueError("cannot merge accumulators with different tracking modes")
        if self.count == 0:
            return replace(other)
        if other.count == 0:
            return replace(self)
        count = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / count
        m2 = self.m2 + other.m2 + delta * delta * self.count * other.count / count
        return MomentAccumulator(
            count=count,
            mean=mean,
            m2=m2,
            m4_raw=self.m4_raw + other.m4_raw,
            track_fourth=self.track_fourth,
        )

    @property
    def variance(self) -> float:
        """Unbiased sample variance; NaN below two samples."""
        if self.count < 2:
            return math.nan
        return self.m2 / (self.count - 1)

    @property
    def mean_fourth(self) -> float:
        """Mean of the accumulated fourth powers."""
        if not self.track_fourth or self.count == 0:
            return math.nan
        return self.m4_raw / self.count


@dataclass(frozen=True)
class RatioEstimate:
    """A cost-ratio point estimate with its 95% confidence interval."""

    ratio: float
    ci_low: float
    ci_high: float
    n_runs: int
    method: str  # "bessel_identity" or "direct_integral"


@dataclass(frozen=True)
class DifferenceEstimate:
    """Difference of two cost ratios estimated from pathwise-coupled runs."""

    value: float
    ci_low: float
    ci_high: float
    n_runs: int


def _level_arrays(records: Sequence[RunRecord]):
    if len(records) < 2:
        raise ValueError(f"need at least 2 records, got {len(records)}")
    rules = {(r.p, r.delta) for r in records}
    if len(rules) > 1:
        raise ValueError(f"records mix trigger configurations: {sorted(rules, key=str)}")
    stop = np.fromiter((r.stop_time for r in records), dtype=float, count=len(records))
    return stop


def _radius4(records: Sequence[RunRecord]) -> np.ndarray:
    return np.fromiter(
        (r.terminal_radius**4 for r in records), dtype=float, count=len(records)
    )


def _integral_x_sq(records: Sequence[RunRecord]) -> np.ndarray:
    return np.fromiter(
        (r.integral_x_sq for r in records), dtype=float, count=len(records)
    )


def _moment_ratio(
    num: np.ndarray,
    stop: np.ndarray,
    denom_scale: float,
    method: str,
    ci_method: str,
    bootstrap_samples: int,
    bootstrap_seed: int,
) -> RatioEstimate:
    """Plug-in estimator mean(num) / (denom_scale * mean(stop)^2) with a 95%
    interval from the delta method on the joint CLT of the two sample means
    (including their covariance), or from a bootstrap when requested."""
    m = num.size
    mean_num = float(num.mean())
    mean_stop = float(stop.mean())
    if mean_stop <= 0:
        raise ValueError(f"mean stop time must be > 0, got {mean_stop}")
    ratio = mean_num / (denom_scale * mean_stop**2)

    if ci_method == "delta":
        cov = np.cov(np.stack([num, stop]))
        g_num = 1.0 / (denom_scale * mean_stop**2)
        g_stop = -2.0 * mean_num / (denom_scale * mean_stop**3)
        var = (
            g_num * g_num * float(cov[0, 0])
            + 2.0 * g_num * g_stop * float(cov[0, 1])
            + g_stop * g_stop * float(cov[1, 1])
        ) / m
        hw = _Z95 * math.sqrt(max(var, 0.0))
        lo, hi = ratio - hw, ratio + hw
    elif ci_method == "bootstrap":
        rng = np.random.default_rng(bootstrap_seed)
        reps = np.empty(bootstrap_samples)
        for b in range(bootstrap_samples):
            idx = rng.integers(0, m, m)
            reps[b] = num[idx].mean() / (denom_scale * stop[idx].mean() ** 2)
        lo, hi = np.percentile(reps, [2.5, 97.5])
        # keep the interval around the point estimate
        lo, hi = min(float(lo), ratio), max(float(hi), ratio)
    else:
        raise ValueError(f"unknown ci_method {ci_method!r}")

    return RatioEstimate(ratio=ratio, ci_low=lo, ci_high=hi, n_runs=m, method=method)


def ratio_bessel(
    records: Sequence[RunRecord],
    n: int,
    ci_method: str = "delta",
    bootstrap_samples: int = 1000,
    bootstrap_seed: int = 0,
) -> RatioEstimate:
    """Cost ratio from the fourth moment of the terminal Euclidean radius:
    mean(R^4) / (n (n+2) mean(stop)^2)."""
    stop = _level_arrays(records)
    return _moment_ratio(
        _radius4(records),
        stop,
        n * (n + 2.0),
        "bessel_identity",
        ci_method,
        bootstrap_samples,
        bootstrap_seed,
    )


def ratio_direct(
    records: Sequence[RunRecord],
    n: int,
    ci_method: str = "delta",
    bootstrap_samples: int = 1000,
    bootstrap_seed: int = 0,
) -> RatioEstimate:
    """Cost ratio from the integrated squared state:
    mean(integral ||x||^2) / (n/2 * mean(stop)^2).

    Algebraically equal to ratio_bessel in expectation; serves as its
    independent cross-check.
    """
    stop = _level_arrays(records)
    return _moment_ratio(
        _integral_x_sq(records),
        stop,
        n / 2.0,
        "direct_integral",
        ci_method,
        bootstrap_samples,
        bootstrap_seed,
    )


def bessel_ratio_difference(
    records_a: Sequence[RunRecord],
    records_b: Sequence[RunRecord],
    n: int,
) -> DifferenceEstimate:
    """ratio_bessel(a) - ratio_bessel(b) for pathwise-coupled record sets.

    The two sets must be aligned run for run (same underlying increments);
    the delta-method interval then uses the full 4x4 covariance, which is
    what makes small gaps between nearby norms resolvable.
    """
    if len(records_a) != len(records_b):
        raise ValueError("coupled record sets must have equal length")
    stop_a = _level_arrays(records_a)
    stop_b = _level_arrays(records_b)
    num_a = _radius4(records_a)
    num_b = _radius4(records_b)
    m = stop_a.size
    scale = n * (n + 2.0)

    ma, sa = float(num_a.mean()), float(stop_a.mean())
    mb, sb = float(num_b.mean()), float(stop_b.mean())
    if sa <= 0 or sb <= 0:
        raise ValueError("mean stop times must be > 0")
    value = ma / (scale * sa**2) - mb / (scale * sb**2)

    grad = np.array(
        [
            1.0 / (scale * sa**2),
            -2.0 * ma / (scale * sa**3),
            -1.0 / (scale * sb**2),
            2.0 * mb / (scale * sb**3),
        ]
    )
    cov = np.cov(np.stack([num_a, stop_a, num_b, stop_b]))
    var = float(grad @ cov @ grad) / m
    hw = _Z95 * math.sqrt(max(var, 0.0))
    return DifferenceEstimate(value=value, ci_low=value - hw, ci_high=value + hw, n_runs=m)


def _max_norm_unit_stop_times(records: Sequence[RunRecord], n: int) -> np.ndarray:
    if n < 2:
        raise ValueError(f"the limit law requires n >= 2, got {n}")
    bad = {(r.p, r.delta) for r in records if r.p != math.inf or r.delta != 1.0}
    if bad:
        raise ValueError(
            f"records must come from max-norm runs at unit threshold, got {sorted(bad, key=str)}"
        )
    if len(records) < 2:
        raise ValueError(f"need at least 2 records, got {len(records)}")
    return np.fromiter((r.stop_time for r in records), dtype=float, count=len(records))


def gumbel_ks(records: Sequence[RunRecord], n: int) -> float:
    """Kolmogorov-Smirnov distance of standardized max-norm stop times to the
    limiting Gumbel CDF.

    Each stop time is standardized as z = scale * (stop - centering) with the
    dimension-n constants; the statistic is the sup distance between the
    empirical CDF of z and gumbel_cdf.
    """
    stop = _max_norm_unit_stop_times(records, n)
    con = gumbel_constants(n)
    z = np.sort(con.scale * (stop - con.centering))
    cdf = gumbel_cdf(z)
    m = z.size
    steps_hi = np.arange(1, m + 1) / m
    steps_lo = np.arange(0, m) / m
    return float(max((steps_hi - cdf).max(), (cdf - steps_lo).max()))


def variance_lower_bound_check(records: Sequence[RunRecord], n: int) -> bool:
    """Check the asymptotic variance floor of max-norm stop times.

    True iff the sample variance is at least (pi^2/6) / (8 (ln n)^4) minus
    three standard errors of the variance estimate.  The limiting variance is
    twice that floor, so real samples clear it with margin.
    """
    stop = _max_norm_unit_stop_times(records, n)
    m = stop.size
    s2 = float(stop.var(ddof=1))
    centered = stop - stop.mean()
    mu4 = float((centered**4).mean())
    var_s2 = max(mu4 - s2 * s2 * (m - 3) / (m - 1), 0.0) / m
    bound = GUMBEL_VARIANCE / (8.0 * math.log(n) ** 4)
    return bool(s2 >= bound - 3.0 * math.sqrt(var_s2))
