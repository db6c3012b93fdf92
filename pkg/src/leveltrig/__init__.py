"""Monte Carlo toolkit comparing level-triggered and periodic sampling for
reset-controlled integrator diffusions."""

from .analytic import (
    GUMBEL_VARIANCE,
    GumbelConstants,
    gumbel_cdf,
    gumbel_constants,
    periodic_cost,
    ratio_from_moments,
    scale_integrated_cost,
    scale_stop_time,
    two_norm_ratio,
)
from .estimators import (
    DifferenceEstimate,
    MomentAccumulator,
    RatioEstimate,
    bessel_ratio_difference,
    gumbel_ks,
    ratio_bessel,
    ratio_direct,
    variance_lower_bound_check,
)
from .harness import (
    ConfigError,
    ExperimentConfig,
    ResultRow,
    SweepSpec,
    emit_fig1,
    emit_fig2,
    parse_config,
    run_experiment,
    run_sweep,
    serialize_config,
    serialize_sweep,
    simulate_records,
)
from .paths import PathState, RngStream, initial_state, reset, simulate_periodic_interval, wiener_step
from .records import RunRecord, TruncationError
from .triggering import (
    Level,
    Periodic,
    TriggerRule,
    check_trigger,
    p_norm,
    simulate_coupled_first_passages,
    simulate_first_passage,
)

__version__ = "0.1.0"

__all__ = [
    "GUMBEL_VARIANCE",
    "GumbelConstants",
    "gumbel_cdf",
    "gumbel_constants",
    "periodic_cost",
    "ratio_from_moments",
    "scale_integrated_cost",
    "scale_stop_time",
    "two_norm_ratio",
    "DifferenceEstimate",
    "MomentAccumulator",
    "RatioEstimate",
    "bessel_ratio_difference",
    "gumbel_ks",
    "ratio_bessel",
    "ratio_direct",
    "variance_lower_bound_check",
    "ConfigError",
    "ExperimentConfig",
    "ResultRow",
    "SweepSpec",
    "emit_fig1",
    "emit_fig2",
    "parse_config",
    "run_experiment",
    "run_sweep",
    "serialize_config",
    "serialize_sweep",
    "simulate_records",
    "PathState",
    "RngStream",
    "initial_state",
    "reset",
    "simulate_periodic_interval",
    "wiener_step",
    "RunRecord",
    "TruncationError",
    "Level",
    "Periodic",
    "TriggerRule",
    "check_trigger",
    "p_norm",
    "simulate_coupled_first_passages",
    "simulate_first_passage",
    "__version__",
]
