"""Per-run simulation outputs shared by the path and triggering layers."""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True, slots=True)
class RunRecord:
    """One simulated inter-event interval.

    ``stop_time`` is the grid time of the triggering step (``steps * h``) for
    level-triggered runs and the exact period for periodic runs.
    ``terminal_radius`` is the Euclidean norm of the state at the stop,
    regardless of which norm triggered.  The integrals are trapezoid sums of
    the squared first coordinate and the squared Euclidean norm over the
    interval.  ``p``/``delta`` record the triggering rule the run was
    produced under (``None`` for periodic runs).
    """

    stop_time: float
    terminal_radius: float
    integral_x1_sq: float
    integral_x_sq: float
    steps: int
    p: float | None = None
    delta: float | None = None


class TruncationError(RuntimeError):
    """A first-passage run exceeded its step budget.

    Truncated runs must abort the whole experiment: dropping them would
    censor the stop-time distribution and bias every estimate built on it.
    """

    def __init__(self, steps: int, max_steps: int, run_index: int | None = None):
        self.steps = steps
        self.max_steps = max_steps
        self.run_index = run_index
        super().__init__(self._message())

    def _message(self) -> str:
        where = f" (run {self.run_index})" if self.run_index is not None else ""
        return (
            f"no trigger within {self.max_steps} steps{where}; "
            "increase max_steps or check the threshold"
        )

    def __str__(self) -> str:  # reflect run_index set after construction
        return self._message()
