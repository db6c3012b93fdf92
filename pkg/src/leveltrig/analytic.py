"""Closed-form quantities for reset-controlled integrator diffusions.

Everything in here is exact arithmetic on model parameters: the periodic
baseline cost, the Euclidean-trigger cost ratio, threshold scaling laws,
the Gumbel limit constants for max-norm triggering, and the assembly of a
cost ratio from simulated moments.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Variance of the limiting Gumbel variable, pi^2 / 6.
GUMBEL_VARIANCE = math.pi**2 / 6.0


@dataclass(frozen=True)
class GumbelConstants:
    """Centering and scale standardizing max-norm stop times at dimension n."""

    centering: float  # time units
    scale: float  # 2 (ln n)^2, inverse time units
    variance: float  # pi^2 / 6


def _check_dimension(n: int) -> None:
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValueError(f"dimension must be a positive integer, got {n!r}")


def periodic_cost(n: int, period: float) -> float:
    """Long-run average quadratic cost of impulsive reset control at a fixed
    period: n * period / 2."""
    _check_dimension(n)
    if period < 0:
        raise ValueError(f"period must be >= 0, got {period}")
    return n * period / 2.0


def two_norm_ratio(n: int) -> float:
    """Cost of Euclidean level triggering relative to rate-matched periodic
    control: n / (n + 2), strictly increasing in n and always below 1."""
    _check_dimension(n)
    return n / (n + 2.0)


def centering_from_log(log_n: float) -> float:
    """Centering constant of the max-norm limit law as a function of ln n."""
    if log_n <= 0:
        raise ValueError(f"log_n must be > 0, got {log_n}")
    return 1.0 / (2.0 * log_n) - math.log(
        math.sqrt(2.0 / math.pi) / math.sqrt(2.0 * log_n)
    ) / (2.0 * log_n**2)


def gumbel_constants(n: int) -> GumbelConstants:
    """Constants of the limit law for max-norm stop times at unit threshold.

    The standardized variable scale * (stop_time - centering) converges in
    distribution to a minimum-type Gumbel variable as n grows.  Undefined at
    n = 1 where ln n vanishes.
    """
    _check_dimension(n)
    if n < 2:
        raise ValueError(f"gumbel_constants requires n >= 2, got {n}")
    ln = math.log(n)
    return GumbelConstants(
        centering=centering_from_log(ln), scale=2.0 * ln**2, variance=GUMBEL_VARIANCE
    )


def gumbel_cdf(r):
    """CDF of the minimum-type Gumbel variable, 1 - exp(-exp(r)).

    Accepts a scalar or an ndarray.  The survival function is exp(-exp(r)),
    so the distribution is left-skewed with mean -gamma and variance pi^2/6.
    """
    # exp(r) overflows past ~709; the CDF is already 1 to machine precision.
    r = np.minimum(r, 700.0)
    out = -np.expm1(-np.exp(r))
    return float(out) if np.ndim(out) == 0 else out


def scale_integrated_cost(value_at_unit: float, delta: float) -> float:
    """Rescale the expected integrated squared state over one interval from
    threshold 1 to threshold delta: the quantity scales as delta^4."""
    if delta <= 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    return delta**4 * value_at_unit


def scale_stop_time(value_at_unit: float, delta: float) -> float:
    """Rescale the expected stop time from threshold 1 to threshold delta:
    the quantity scales as delta^2."""
    if delta <= 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    return delta**2 * value_at_unit


def ratio_from_moments(mean_radius4: float, mean_stop_time: float, n: int) -> float:
    """Assemble the event-to-periodic cost ratio from simulated moments.

    ratio = E[R(stop)^4] / (n (n+2) E[stop]^2), where R is the Euclidean
    norm of the state.  With the exact Euclidean-trigger boundary values
    (mean_radius4 = delta^4, mean_stop_time = delta^2 / n) this reproduces
    two_norm_ratio(n) identically.
    """
    _check_dimension(n)
    if mean_stop_time <= 0:
        raise ValueError(f"mean stop time must be > 0, got {mean_stop_time}")
    return mean_radius4 / (n * (n + 2.0) * mean_stop_time**2)
