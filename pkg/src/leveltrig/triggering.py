"""p-norm level triggers and first-passage simulation on the Euler grid.

Detection is on the discrete grid with an inclusive threshold: a run stops at
the first grid time where the chosen norm of the state reaches the level.  No
sub-step (bridge) correction is applied; the resulting O(sqrt(h)) overshoot
is an accepted discretization artifact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence, Union

import numpy as np

from .paths import PathState, RngStream, block_rows
from .records import RunRecord, TruncationError

INF = math.inf


@dataclass(frozen=True)
class Periodic:
    """Fixed-period sampling: trigger once the elapsed time reaches period."""

    period: float

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError(f"period must be > 0, got {self.period}")


@dataclass(frozen=True)
class Level:
    """Level trigger: fire when the p-norm of the state reaches delta.

    p may be any real >= 1 or math.inf for the max norm.
    """

    p: float
    delta: float = 1.0

    def __post_init__(self):
        if not self.p >= 1:
            raise ValueError(f"norm order must satisfy p >= 1, got {self.p}")
        if not self.delta > 0:
            raise ValueError(f"delta must be > 0, got {self.delta}")


TriggerRule = Union[Periodic, Level]


def p_norm(x, p: float) -> float:
    """p-norm of a vector, max norm for p = inf.

    Rescales by the largest absolute entry so that large p cannot overflow.
    """
    if not p >= 1:
        raise ValueError(f"norm order must satisfy p >= 1, got {p}")
    a = np.abs(np.asarray(x, dtype=float))
    if a.size == 0:
        return 0.0
    m = float(a.max())
    if p == INF or m == 0.0:
        return m
    return m * float(((a / m) ** p).sum()) ** (1.0 / p)


def check_trigger(state: PathState, rule: TriggerRule) -> bool:
    """True once the rule's firing condition holds for the given state."""
    if isinstance(rule, Periodic):
        return state.t >= rule.period
    return p_norm(state.x, rule.p) >= rule.delta


def default_max_steps(n: int, p: float, delta: float, h: float) -> int:
    """Loud-abort step budget: around fifty mean stop times.

    Stop times have exponential tails, so hitting this budget signals a
    misconfiguration rather than bad luck.
    """
    if p == INF:
        return int(math.ceil(50.0 * delta**2 / h))
    return int(math.ceil(50.0 * delta**2 * n / h))


def _int_power(base: np.ndarray, k: int) -> np.ndarray:
    """base**k by repeated squaring; base is consumed."""
    out = None
    while k:
        if k & 1:
            out = base.copy() if out is None else out * base
        k >>= 1
        if k:
            base = base * base
    return out


def row_p_norms(y: np.ndarray, p: float) -> np.ndarray:
    """p-norm of every row of a (rows, n) block, overflow-safe."""
    if p == INF:
        return np.abs(y).max(axis=1)
    if p == 2:
        return np.sqrt(np.einsum("ij,ij->i", y, y))
    a = np.abs(y)
    m = a.max(axis=1)
    safe = np.where(m > 0.0, m, 1.0)
    r = a / safe[:, None]
    if float(p).is_integer() and p <= 64:
        rp = _int_power(r, int(p))
    else:
        rp = r**p
    return m * rp.sum(axis=1) ** (1.0 / p)


def _expected_stop_time(n: int, p: float, delta: float) -> float:
    # Rough mean stop time used only to size the first draw block.  The
    # Euclidean trigger stops around delta^2/n; wider norms stop later, at a
    # scale that shrinks only logarithmically with dimension.
    if p == 2:
        return delta**2 / n
    return delta**2 * min(1.0, 0.5 / max(math.log(n), 0.5) + 0.5 / n)


def _initial_rows(n: int, p: float, delta: float, h: float) -> int:
    # Later blocks grow geometrically, so an underestimate costs only a few
    # extra iterations while an overestimate wastes draws.
    return block_rows(n, 1.35 * _expected_stop_time(n, p, delta) / h)


def simulate_first_passage(
    n: int,
    p: float,
    delta: float,
    h: float,
    rng: RngStream,
    max_steps: int | None = None,
) -> RunRecord:
    """Simulate one level-triggered interval from the origin.

    Evolves Euler steps until the p-norm of the state first reaches delta on
    the grid, and returns the stopped record.  Raises TruncationError if no
    trigger occurs within max_steps; such runs must abort the experiment, not
    be dropped, to avoid censoring bias.
    """
    if not p >= 1:
        raise ValueError(f"norm order must satisfy p >= 1, got {p}")
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    if not h > 0:
        raise ValueError(f"step size must be > 0, got {h}")
    if max_steps is None:
        max_steps = default_max_steps(n, p, delta, h)
    if max_steps < 1:
        raise ValueError(f"max_steps must be >= 1, got {max_steps}")

    sqh = math.sqrt(h)
    carry = np.zeros(n)
    carry_sq = 0.0
    carry_x1 = 0.0
    integral_x_sq = 0.0
    integral_x1_sq = 0.0
    done = 0
    rows = _initial_rows(n, p, delta, h)

    while done < max_steps:
        take = min(rows, max_steps - done)
        z = rng.normals(take, n)
        np.multiply(z, sqh, out=z)
        y = np.cumsum(z, axis=0)
        y += carry
        row_sq = np.einsum("ij,ij->i", y, y)
        x1_sq = y[:, 0] ** 2

        if p == 2:
            hits = row_sq >= delta * delta
        else:
            hits = row_p_norms(y, p) >= delta

        if hits.any():
            j = int(np.argmax(hits))  # first triggering step within the block
            integral_x_sq += (0.5 * carry_sq + float(row_sq[:j].sum()) + 0.5 * float(row_sq[j])) * h
            integral_x1_sq += (0.5 * carry_x1 + float(x1_sq[:j].sum()) + 0.5 * float(x1_sq[j])) * h
            steps = done + j + 1
            return RunRecord(
                stop_time=steps * h,
                terminal_radius=math.sqrt(float(row_sq[j])),
                integral_x1_sq=integral_x1_sq,
                integral_x_sq=integral_x_sq,
                steps=steps,
                p=p,
                delta=delta,
            )

        integral_x_sq += (0.5 * carry_sq + float(row_sq[:-1].sum()) + 0.5 * float(row_sq[-1])) * h
        integral_x1_sq += (0.5 * carry_x1 + float(x1_sq[:-1].sum()) + 0.5 * float(x1_sq[-1])) * h
        carry = y[-1].copy()
        carry_sq = float(row_sq[-1])
        carry_x1 = float(x1_sq[-1])
        done += take
        rows = block_rows(n, rows * 2)

    raise TruncationError(steps=done, max_steps=max_steps)


def simulate_coupled_first_passages(
    n: int,
    p_values: Sequence[float],
    delta: float,
    h: float,
    rng: RngStream,
    max_steps: int | None = None,
) -> dict[float, RunRecord]:
    """Simulate one path and stop it under several p-norm triggers at once.

    All triggers share the identical increment sequence, so the stop times
    are pathwise coupled: a smaller p has the larger norm and therefore
    triggers no later.  Returns one record per requested p.
    """
    ps = sorted(set(float(p) for p in p_values))
    if not ps:
        raise ValueError("p_values must be nonempty")
    if not ps[0] >= 1:
        raise ValueError(f"norm order must satisfy p >= 1, got {ps[0]}")
    if not delta > 0:
        raise ValueError(f"delta must be > 0, got {delta}")
    if not h > 0:
        raise ValueError(f"step size must be > 0, got {h}")
    if max_steps is None:
        max_steps = max(default_max_steps(n, p, delta, h) for p in ps)

    sqh = math.sqrt(h)
    carry = np.zeros(n)
    carry_sq = 0.0
    carry_x1 = 0.0
    integral_x_sq = 0.0
    integral_x1_sq = 0.0
    done = 0
    rows = _initial_rows(n, ps[-1], delta, h)

    pending = list(ps)  # ascending: earlier triggers resolve first
    out: dict[float, RunRecord] = {}

    while done < max_steps and pending:
        take = min(rows, max_steps - done)
        z = rng.normals(take, n)
        np.multiply(z, sqh, out=z)
        y = np.cumsum(z, axis=0)
        y += carry
        row_sq = np.einsum("ij,ij->i", y, y)
        x1_sq = y[:, 0] ** 2
        cum_sq = np.cumsum(row_sq)
        cum_x1 = np.cumsum(x1_sq)

        for p in list(pending):
            if p == 2:
                hits = row_sq >= delta * delta
            else:
                hits = row_p_norms(y, p) >= delta
            if not hits.any():
                break  # larger p triggers even later
            j = int(np.argmax(hits))
            pre_sq = 0.5 * carry_sq + (float(cum_sq[j - 1]) if j > 0 else 0.0) + 0.5 * float(row_sq[j])
            pre_x1 = 0.5 * carry_x1 + (float(cum_x1[j - 1]) if j > 0 else 0.0) + 0.5 * float(x1_sq[j])
            steps = done + j + 1
            out[p] = RunRecord(
                stop_time=steps * h,
                terminal_radius=math.sqrt(float(row_sq[j])),
                integral_x1_sq=integral_x1_sq + pre_x1 * h,
                integral_x_sq=integral_x_sq + pre_sq * h,
                steps=steps,
                p=p,
                delta=delta,
            )
            pending.remove(p)

        if not pending:
            return out

        integral_x_sq += (0.5 * carry_sq + float(cum_sq[-1]) - 0.5 * float(row_sq[-1])) * h
        integral_x1_sq += (0.5 * carry_x1 + float(cum_x1[-1]) - 0.5 * float(x1_sq[-1])) * h
        carry = y[-1].copy()
        carry_sq = float(row_sq[-1])
        carry_x1 = float(x1_sq[-1])
        done += take
        rows = block_rows(n, rows * 2)

    if pending:
        raise TruncationError(steps=done, max_steps=max_steps)
    return out
