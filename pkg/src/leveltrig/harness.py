"""Experiment configuration, sweep orchestration and result emission.

Configs are flat ``key = value`` text with ``#`` comments.  Results go out as
CSV (17 significant digits) or a JSON mirror with identical field names; the
wall_time_s column is informational and excluded from determinism guarantees.
"""

from __future__ import annotations

import csv
import io
import json
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Iterable, Sequence, TextIO, Union

from .estimators import MomentAccumulator, RatioEstimate, gumbel_ks, ratio_bessel, ratio_direct
from .paths import RngStream, simulate_periodic_interval
from .records import RunRecord, TruncationError
from .triggering import INF, Level, Periodic, TriggerRule, default_max_steps, simulate_first_passage

DEFAULT_STEP_SIZE = 1e-4
DEFAULT_RUNS = 20_000
DEFAULT_MASTER_SEED = 11
DEFAULT_N_GRID = (1, 2, 3, 5, 7, 10, 15, 20, 30, 40, 50, 70, 100)
DEFAULT_P_GRID = (2.0, 8.0, INF)
DEFAULT_DELTA = 1.0

ESTIMATORS = ("bessel_identity", "direct_integral", "both")
CI_METHODS = ("delta", "bootstrap")

# Runs per work unit; constant so that results never depend on thread count.
CHUNK_RUNS = 512


class ConfigError(ValueError):
    """Invalid configuration document or option."""


@dataclass(frozen=True)
class ExperimentConfig:
    """Full description of one experiment."""

    n: int = 1
    rule: TriggerRule = Level(p=2.0, delta=DEFAULT_DELTA)
    h: float = DEFAULT_STEP_SIZE
    runs: int = DEFAULT_RUNS
    master_seed: int = DEFAULT_MASTER_SEED
    max_steps: int | None = None  # None derives a rule-dependent default
    estimator: str = "both"
    ci_method: str = "delta"

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"n must be >= 1, got {self.n}")
        if not self.h > 0:
            raise ConfigError(f"h must be > 0, got {self.h}")
        if self.runs < 1:
            raise ConfigError(f"runs must be >= 1, got {self.runs}")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError(f"master_seed must fit in 64 bits, got {self.master_seed}")
        if self.max_steps is not None and self.max_steps < 1:
            raise ConfigError(f"max_steps must be >= 1, got {self.max_steps}")
        if self.estimator not in ESTIMATORS:
            raise ConfigError(f"estimator must be one of {ESTIMATORS}, got {self.estimator!r}")
        if self.ci_method not in CI_METHODS:
            raise ConfigError(f"ci_method must be one of {CI_METHODS}, got {self.ci_method!r}")

    def resolved_max_steps(self) -> int:
        if self.max_steps is not None:
            return self.max_steps
        if isinstance(self.rule, Level):
            return default_max_steps(self.n, self.rule.p, self.rule.delta, self.h)
        return 0  # unused for periodic rules


@dataclass(frozen=True)
class SweepSpec:
    """Grid of (n, p) cells swept at a common threshold."""

    n_grid: tuple[int, ...] = DEFAULT_N_GRID
    p_grid: tuple[float, ...] = DEFAULT_P_GRID
    delta: float = DEFAULT_DELTA

    def __post_init__(self):
        if not self.n_grid or not self.p_grid:
            raise ConfigError("sweep grids must be nonempty")
        object.__setattr__(self, "n_grid", tuple(sorted(set(int(n) for n in self.n_grid))))
        object.__setattr__(self, "p_grid", tuple(sorted(set(float(p) for p in self.p_grid))))
        if self.n_grid[0] < 1:
            raise ConfigError(f"n_grid entries must be >= 1, got {self.n_grid[0]}")
        if self.p_grid[0] < 1:
            raise ConfigError(f"p_grid entries must be >= 1, got {self.p_grid[0]}")
        if not self.delta > 0:
            raise ConfigError(f"delta must be > 0, got {self.delta}")


@dataclass
class ResultRow:
    """One (n, p) cell's summary: moments, ratio estimate and provenance."""

    n: int
    p: float | None  # None for periodic runs
    delta: float | None
    runs: int
    h: float
    mean_tau: float
    var_tau: float
    mean_R4: float
    ratio: float
    ci_low: float
    ci_high: float
    ks_gumbel: float | None = None
    wall_time_s: float = 0.0


CSV_COLUMNS = (
    "n",
    "p",
    "delta",
    "runs",
    "h",
    "mean_tau",
    "var_tau",
    "mean_R4",
    "ratio",
    "ci_low",
    "ci_high",
    "ks_gumbel",
    "wall_time_s",
)


# ---------------------------------------------------------------------------
# config parsing


_EXPERIMENT_KEYS = (
    "n",
    "p",
    "T",
    "delta",
    "h",
    "runs",
    "master_seed",
    "max_steps",
    "estimator",
    "ci_method",
)
_SWEEP_KEYS = ("n_grid", "p_grid")


def _parse_lines(text: str) -> dict[str, tuple[str, int]]:
    items: dict[str, tuple[str, int]] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        if not key:
            raise ConfigError(f"line {lineno}: missing key")
        if key in items:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        if key not in _EXPERIMENT_KEYS and key not in _SWEEP_KEYS:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        items[key] = (value, lineno)
    return items


def _parse_int(key: str, value: str, lineno: int, minimum: int | None = None) -> int:
    try:
        out = int(value)
    except ValueError:
        raise ConfigError(f"line {lineno}: {key} must be an integer, got {value!r}") from None
    if minimum is not None and out < minimum:
        raise ConfigError(f"line {lineno}: {key} must be >= {minimum}, got {out}")
    return out


def _parse_float(key: str, value: str, lineno: int, positive: bool = False) -> float:
    if value.lower() in ("inf", "infinity"):
        out = INF
    else:
        try:
            out = float(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: {key} must be a number, got {value!r}") from None
    if positive and not out > 0:
        raise ConfigError(f"line {lineno}: {key} must be > 0, got {value}")
    return out


def _parse_grid(key: str, value: str, lineno: int) -> tuple[float, ...]:
    parts = [part.strip() for part in value.split(",") if part.strip()]
    if not parts:
        raise ConfigError(f"line {lineno}: {key} must be a nonempty comma-separated list")
    return tuple(_parse_float(key, part, lineno) for part in parts)


def parse_document(text: str) -> tuple[ExperimentConfig, SweepSpec | None]:
    """Parse a config document into a base ExperimentConfig and, when grid
    keys are present, a SweepSpec sharing the same document."""
    items = _parse_lines(text)

    def take(key):
        return items.pop(key, None)

    kwargs: dict = {}
    pair = take("n")
    if pair:
        kwargs["n"] = _parse_int("n", *pair, minimum=1)
    pair = take("h")
    if pair:
        kwargs["h"] = _parse_float("h", *pair, positive=True)
    pair = take("runs")
    if pair:
        kwargs["runs"] = _parse_int("runs", *pair, minimum=1)
    pair = take("master_seed")
    if pair:
        kwargs["master_seed"] = _parse_int("master_seed", *pair, minimum=0)
    pair = take("max_steps")
    if pair:
        kwargs["max_steps"] = _parse_int("max_steps", *pair, minimum=1)
    pair = take("estimator")
    if pair:
        value, lineno = pair
        if value not in ESTIMATORS:
            raise ConfigError(f"line {lineno}: estimator must be one of {ESTIMATORS}, got {value!r}")
        kwargs["estimator"] = value
    pair = take("ci_method")
    if pair:
        value, lineno = pair
        if value not in CI_METHODS:
            raise ConfigError(f"line {lineno}: ci_method must be one of {CI_METHODS}, got {value!r}")
        kwargs["ci_method"] = value

    p_pair = take("p")
    t_pair = take("T")
    delta_pair = take("delta")
    delta = _parse_float("delta", *delta_pair, positive=True) if delta_pair else DEFAULT_DELTA

    n_grid_pair = take("n_grid")
    p_grid_pair = take("p_grid")

    if t_pair is not None and p_pair is not None:
        raise ConfigError(f"line {t_pair[1]}: keys 'T' and 'p' are mutually exclusive")

    try:
        if t_pair is not None:
            kwargs["rule"] = Periodic(period=_parse_float("T", *t_pair, positive=True))
        else:
            p_value = _parse_float("p", *p_pair) if p_pair else 2.0
            if p_value < 1:
                raise ConfigError(f"line {p_pair[1]}: p must be >= 1, got {p_value}")
            kwargs["rule"] = Level(p=p_value, delta=delta)
        base = ExperimentConfig(**kwargs)
    except ValueError as exc:  # dataclass validation
        raise ConfigError(str(exc)) from None

    spec = None
    if n_grid_pair is not None or p_grid_pair is not None:
        n_grid = (
            tuple(int(v) for v in _parse_grid("n_grid", *n_grid_pair))
            if n_grid_pair
            else DEFAULT_N_GRID
        )
        p_grid = _parse_grid("p_grid", *p_grid_pair) if p_grid_pair else DEFAULT_P_GRID
        spec = SweepSpec(n_grid=n_grid, p_grid=p_grid, delta=delta)

    return base, spec


def parse_config(text: str) -> Union[ExperimentConfig, SweepSpec]:
    """Parse a config document; grid keys make it a sweep, otherwise a single
    experiment with protocol defaults filled in."""
    base, spec = parse_document(text)
    return spec if spec is not None else base


def _fmt_p(p: float | None) -> str:
    if p is None:
        return ""
    if p == INF:
        return "inf"
    return _fmt_float(p)


def serialize_config(cfg: ExperimentConfig) -> str:
    """Render a config as a parse_config-compatible document."""
    lines = [f"n = {cfg.n}"]
    if isinstance(cfg.rule, Periodic):
        lines.append(f"T = {_fmt_float(cfg.rule.period)}")
    else:
        lines.append(f"p = {_fmt_p(cfg.rule.p)}")
        lines.append(f"delta = {_fmt_float(cfg.rule.delta)}")
    lines.append(f"h = {_fmt_float(cfg.h)}")
    lines.append(f"runs = {cfg.runs}")
    lines.append(f"master_seed = {cfg.master_seed}")
    if cfg.max_steps is not None:
        lines.append(f"max_steps = {cfg.max_steps}")
    lines.append(f"estimator = {cfg.estimator}")
    lines.append(f"ci_method = {cfg.ci_method}")
    return "\n".join(lines) + "\n"


def serialize_sweep(spec: SweepSpec) -> str:
    lines = [
        "n_grid = " + ",".join(str(n) for n in spec.n_grid),
        "p_grid = " + ",".join(_fmt_p(p) for p in spec.p_grid),
        f"delta = {_fmt_float(spec.delta)}",
    ]
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# execution


def _chunk_bounds(runs: int) -> list[tuple[int, int]]:
    return [(start, min(start + CHUNK_RUNS, runs)) for start in range(0, runs, CHUNK_RUNS)]


def _simulate_chunk(cfg: ExperimentConfig, run_offset: int, start: int, stop: int) -> list[RunRecord]:
    out = []
    rule = cfg.rule
    if isinstance(rule, Level):
        max_steps = cfg.resolved_max_steps()
        for i in range(start, stop):
            stream = RngStream(cfg.master_seed, run_offset + i)
            try:
                out.append(
                    simulate_first_passage(cfg.n, rule.p, rule.delta, cfg.h, stream, max_steps)
                )
            except TruncationError as exc:
                exc.run_index = run_offset + i
                raise
    else:
        for i in range(start, stop):
            stream = RngStream(cfg.master_seed, run_offset + i)
            out.append(simulate_periodic_interval(cfg.n, rule.period, cfg.h, stream))
    return out


def simulate_records(
    cfg: ExperimentConfig, run_offset: int = 0, threads: int = 1
) -> list[RunRecord]:
    """Simulate cfg.runs independent intervals, returned in run order.

    Each run's stream is keyed by (master_seed, run_offset + run index), and
    work is split into fixed-size chunks reassembled in order, so the output
    is identical for every thread count.
    """
    bounds = _chunk_bounds(cfg.runs)
    if threads > 1 and len(bounds) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunks = list(
                pool.map(lambda b: _simulate_chunk(cfg, run_offset, b[0], b[1]), bounds)
            )
    else:
        chunks = [_simulate_chunk(cfg, run_offset, start, stop) for start, stop in bounds]
    records: list[RunRecord] = []
    for chunk in chunks:
        records.extend(chunk)
    return records


def _reduce_moments(records: list[RunRecord]) -> tuple[MomentAccumulator, MomentAccumulator]:
    """Chunk-wise accumulate and merge in chunk order (thread-count invariant)."""
    stop_acc = MomentAccumulator()
    radius_acc = MomentAccumulator(track_fourth=True)
    for start, stop in _chunk_bounds(len(records)):
        chunk_stop = MomentAccumulator()
        chunk_radius = MomentAccumulator(track_fourth=True)
        for record in records[start:stop]:
            chunk_stop.add(record.stop_time)
            chunk_radius.add(record.terminal_radius)
        stop_acc = stop_acc.merge(chunk_stop)
        radius_acc = radius_acc.merge(chunk_radius)
    return stop_acc, radius_acc


def run_experiment(
    cfg: ExperimentConfig, run_offset: int = 0, threads: int = 1
) -> ResultRow:
    """Execute one experiment and summarize it as a ResultRow.

    Deterministic for a fixed config and run_offset; threads only change the
    wall time.  Truncation aborts propagate with the offending run index.
    """
    t0 = time.perf_counter()
    records = simulate_records(cfg, run_offset=run_offset, threads=threads)
    stop_acc, radius_acc = _reduce_moments(records)

    estimates: dict[str, RatioEstimate] = {}
    if cfg.estimator in ("bessel_identity", "both"):
        estimates["bessel_identity"] = ratio_bessel(records, cfg.n, ci_method=cfg.ci_method)
    if cfg.estimator in ("direct_integral", "both"):
        estimates["direct_integral"] = ratio_direct(records, cfg.n, ci_method=cfg.ci_method)
    primary = estimates.get("bessel_identity", estimates.get("direct_integral"))

    rule = cfg.rule
    is_level = isinstance(rule, Level)
    ks = None
    if is_level and rule.p == INF and rule.delta == 1.0 and cfg.n >= 2:
        ks = gumbel_ks(records, cfg.n)

    return ResultRow(
        n=cfg.n,
        p=rule.p if is_level else None,
        delta=rule.delta if is_level else None,
        runs=cfg.runs,
        h=cfg.h,
        mean_tau=stop_acc.mean,
        var_tau=stop_acc.variance,
        mean_R4=radius_acc.mean_fourth,
        ratio=primary.ratio,
        ci_low=primary.ci_low,
        ci_high=primary.ci_high,
        ks_gumbel=ks,
        wall_time_s=time.perf_counter() - t0,
    )


class SweepError(RuntimeError):
    """A sweep cell failed; carries the cell identity."""

    def __init__(self, n: int, p: float, cause: BaseException):
        self.n = n
        self.p = p
        self.cause = cause
        super().__init__(f"sweep cell (n={n}, p={_fmt_p(p)}) failed: {cause}")


def run_sweep(
    spec: SweepSpec,
    base: ExperimentConfig,
    threads: int = 1,
    progress: TextIO | None = None,
) -> list[ResultRow]:
    """Run every (n, p) cell of the sweep under a deterministic seed schedule.

    Cell k draws run indices [k * base.runs, (k+1) * base.runs), so cells are
    mutually independent and the whole sweep is reproducible from the master
    seed alone.  Progress goes to stderr unless redirected.
    """
    stream = sys.stderr if progress is None else progress
    cells = [(n, p) for n in spec.n_grid for p in spec.p_grid]
    rows = []
    for index, (n, p) in enumerate(cells):
        cfg = replace(base, n=n, rule=Level(p=p, delta=spec.delta), max_steps=base.max_steps)
        print(
            f"[{index + 1}/{len(cells)}] n={n} p={_fmt_p(p)} runs={cfg.runs} ...",
            file=stream,
            flush=True,
        )
        try:
            row = run_experiment(cfg, run_offset=index * cfg.runs, threads=threads)
        except (TruncationError, ValueError) as exc:
            raise SweepError(n, p, exc) from exc
        rows.append(row)
    return rows


# ---------------------------------------------------------------------------
# emission


def _fmt_float(x: float) -> str:
    if x != x:  # NaN
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(float(x), ".17g")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return str(value)
    if isinstance(value, int):
        return str(value)
    return _fmt_float(value)


def row_to_record(row: ResultRow) -> dict:
    return {
        "n": row.n,
        "p": row.p,
        "delta": row.delta,
        "runs": row.runs,
        "h": row.h,
        "mean_tau": row.mean_tau,
        "var_tau": row.var_tau,
        "mean_R4": row.mean_R4,
        "ratio": row.ratio,
        "ci_low": row.ci_low,
        "ci_high": row.ci_high,
        "ks_gumbel": row.ks_gumbel,
        "wall_time_s": row.wall_time_s,
    }


def write_rows_csv(rows: Sequence[ResultRow], out: TextIO) -> None:
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for row in rows:
        record = row_to_record(row)
        writer.writerow(
            [_fmt_p(record["p"]) if column == "p" else _cell(record[column]) for column in CSV_COLUMNS]
        )


def write_rows_json(rows: Sequence[ResultRow], out: TextIO) -> None:
    payload = []
    for row in rows:
        record = row_to_record(row)
        if record["p"] == INF:
            record["p"] = "inf"  # JSON has no inf literal
        payload.append(record)
    json.dump(payload, out, indent=2)
    out.write("\n")


def rows_to_csv_text(rows: Sequence[ResultRow]) -> str:
    buffer = io.StringIO()
    write_rows_csv(rows, buffer)
    return buffer.getvalue()


def read_rows_csv(source: TextIO) -> list[ResultRow]:
    """Parse rows previously written by write_rows_csv."""
    reader = csv.DictReader(source)
    missing = set(CSV_COLUMNS) - set(reader.fieldnames or ())
    if missing:
        raise ConfigError(f"rows file missing columns: {sorted(missing)}")
    rows = []
    for record in reader:
        p_text = record["p"]
        rows.append(
            ResultRow(
                n=int(record["n"]),
                p=None if p_text == "" else (INF if p_text == "inf" else float(p_text)),
                delta=float(record["delta"]) if record["delta"] else None,
                runs=int(record["runs"]),
                h=float(record["h"]),
                mean_tau=float(record["mean_tau"]),
                var_tau=float(record["var_tau"]),
                mean_R4=float(record["mean_R4"]),
                ratio=float(record["ratio"]),
                ci_low=float(record["ci_low"]),
                ci_high=float(record["ci_high"]),
                ks_gumbel=float(record["ks_gumbel"]) if record["ks_gumbel"] else None,
                wall_time_s=float(record["wall_time_s"]) if record["wall_time_s"] else 0.0,
            )
        )
    return rows


def _level_rows(rows: Iterable[ResultRow]) -> list[ResultRow]:
    return [row for row in rows if row.p is not None]


def emit_fig1(rows: Sequence[ResultRow], out: TextIO) -> None:
    """Write the cost-ratio-versus-dimension series, one per norm order.

    Euclidean rows additionally carry the closed-form column n / (n + 2) for
    direct comparison against the estimate.
    """
    level = _level_rows(rows)
    if not level:
        raise ConfigError("fig1 needs at least one level-triggered row")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(("p", "n", "ratio", "ci_low", "ci_high", "closed_form_2norm"))
    for row in sorted(level, key=lambda r: (r.p, r.n)):
        closed = _fmt_float(row.n / (row.n + 2.0)) if row.p == 2.0 else ""
        writer.writerow(
            (
                _fmt_p(row.p),
                row.n,
                _fmt_float(row.ratio),
                _fmt_float(row.ci_low),
                _fmt_float(row.ci_high),
                closed,
            )
        )


def emit_fig2(rows: Sequence[ResultRow], out: TextIO) -> None:
    """Write each norm's cost relative to the Euclidean trigger at equal mean
    sampling rate: ratio_p / ratio_2 per dimension, with propagated intervals.
    """
    level = _level_rows(rows)
    baseline = {row.n: row for row in level if row.p == 2.0}
    others = [row for row in level if row.p != 2.0]
    if not baseline:
        raise ConfigError("fig2 needs a p=2 baseline series")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(("p", "n", "ratio_vs_2norm", "combined_ci_low", "combined_ci_high"))
    for row in sorted(others, key=lambda r: (r.p, r.n)):
        base = baseline.get(row.n)
        if base is None:
            raise ConfigError(f"fig2 is missing the p=2 baseline for n={row.n}")
        quotient = row.ratio / base.ratio
        rel_row = (row.ci_high - row.ci_low) / 2.0 / row.ratio
        rel_base = (base.ci_high - base.ci_low) / 2.0 / base.ratio
        hw = abs(quotient) * math.hypot(rel_row, rel_base)
        writer.writerow(
            (
                _fmt_p(row.p),
                row.n,
                _fmt_float(quotient),
                _fmt_float(quotient - hw),
                _fmt_float(quotient + hw),
            )
        )
