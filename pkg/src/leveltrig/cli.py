"""Command-line entry point.

Subcommands: ``run`` executes one experiment, ``sweep`` a grid of (n, p)
cells, ``fig1``/``fig2`` turn stored result rows into plot-ready CSVs, and
``check`` runs the quick self-test suite.

Exit codes: 0 success, 1 validation error, 2 runtime abort (truncation or a
failed self-check), 3 I/O error.
"""

from __future__ import annotations

import argparse
import math
import sys
from contextlib import contextmanager
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analytic, estimators, harness, triggering
from .harness import ConfigError, ExperimentConfig, SweepSpec
from .records import TruncationError

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_IO = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would exit(2); usage errors are validation
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="leveltrig", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", type=Path, help="flat key = value config file")
        p.add_argument("--out", type=Path, help="output path (default: stdout)")
        p.add_argument("--seed", type=int, help="override master_seed")
        p.add_argument("--runs", type=int, help="override run count")
        p.add_argument("--h", type=float, dest="h", help="override step size")
        p.add_argument("--threads", type=int, default=1, help="worker threads (speed only)")
        p.add_argument("--format", choices=("csv", "json"), default="csv")

    add_common(sub.add_parser("run", help="run a single experiment"))
    add_common(sub.add_parser("sweep", help="run an (n, p) sweep"))

    for name in ("fig1", "fig2"):
        p = sub.add_parser(name, help=f"emit the {name} data file from stored rows")
        p.add_argument("rows", type=Path, help="rows CSV produced by run/sweep")
        p.add_argument("--out", type=Path, help="output path (default: stdout)")

    sub.add_parser("check", help="run the analytic/property self-test suite")
    return parser


def _load_document(path: Path | None) -> str:
    if path is None:
        return ""
    try:
        return path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    updates = {}
    if args.seed is not None:
        updates["master_seed"] = args.seed
    if args.runs is not None:
        updates["runs"] = args.runs
    if args.h is not None:
        updates["h"] = args.h
    return replace(cfg, **updates) if updates else cfg


@contextmanager
def _open_out(path: Path | None):
    if path is None:
        yield sys.stdout
        return
    with open(path, "w", newline="") as handle:
        yield handle


def _emit_rows(rows, args) -> None:
    with _open_out(args.out) as out:
        if args.format == "json":
            harness.write_rows_json(rows, out)
        else:
            harness.write_rows_csv(rows, out)


def _cmd_run(args) -> int:
    parsed = harness.parse_config(_load_document(args.config))
    if isinstance(parsed, SweepSpec):
        raise ConfigError("config contains sweep grids; use the sweep command")
    cfg = _apply_overrides(parsed, args)
    row = harness.run_experiment(cfg, threads=args.threads)
    _emit_rows([row], args)
    return EXIT_OK


def _cmd_sweep(args) -> int:
    base, spec = harness.parse_document(_load_document(args.config))
    if spec is None:
        spec = SweepSpec()
    base = _apply_overrides(base, args)
    rows = harness.run_sweep(spec, base, threads=args.threads)
    _emit_rows(rows, args)
    return EXIT_OK


def _cmd_fig(args, emit) -> int:
    try:
        with open(args.rows) as source:
            rows = harness.read_rows_csv(source)
    except OSError as exc:
        print(f"error: cannot read rows {args.rows}: {exc}", file=sys.stderr)
        return EXIT_IO
    with _open_out(args.out) as out:
        emit(rows, out)
    return EXIT_OK


def _self_checks():
    rng = np.random.default_rng(0)

    def closed_forms():
        assert analytic.periodic_cost(1, 1.0) == 0.5
        assert analytic.periodic_cost(4, 0.5) == 1.0
        assert analytic.two_norm_ratio(2) == 0.5
        assert abs(analytic.two_norm_ratio(10) - 10.0 / 12.0) < 1e-15

    def ratio_identity():
        for n in (1, 2, 5, 17, 100):
            for delta in (0.5, 1.0, 2.0, 3.7):
                assembled = analytic.ratio_from_moments(delta**4, delta**2 / n, n)
                assert abs(assembled - analytic.two_norm_ratio(n)) < 1e-12

    def scaling_semigroup():
        for a in (0.5, 1.0, 2.0):
            for b in (0.25, 3.0):
                q = analytic.scale_integrated_cost(analytic.scale_integrated_cost(1.3, a), b)
                assert abs(q - analytic.scale_integrated_cost(1.3, a * b)) < 1e-9 * max(q, 1)
                t = analytic.scale_stop_time(analytic.scale_stop_time(0.7, a), b)
                assert abs(t - analytic.scale_stop_time(0.7, a * b)) < 1e-12 * max(t, 1)

    def gumbel_shape():
        grid = np.linspace(-8.0, 6.0, 200)
        values = analytic.gumbel_cdf(grid)
        assert np.all(np.diff(values) >= 0)
        assert values[0] < 1e-3 and values[-1] > 1 - 1e-12
        assert abs(analytic.gumbel_cdf(0.0) - (1 - math.exp(-1))) < 1e-15
        assert abs(analytic.gumbel_cdf(math.log(math.log(2))) - 0.5) < 1e-12

    def gumbel_sampling():
        u = rng.random(20_000)
        z = np.log(-np.log1p(-u))  # inverse transform of the CDF
        ks = _ks_against_cdf(z)
        assert ks <= 1.36 / math.sqrt(z.size), f"KS {ks:.4f} too large"

    def norms():
        assert triggering.p_norm([3.0, 4.0], 2) == 5.0
        assert triggering.p_norm([1.0, -2.0, 0.5], math.inf) == 2.0
        assert abs(triggering.p_norm([1.0] * 7, 3) - 7 ** (1 / 3)) < 1e-12

    def determinism_smoke():
        cfg = ExperimentConfig(n=2, rule=triggering.Level(p=2.0), h=1e-3, runs=200)
        a = harness.run_experiment(cfg)
        b = harness.run_experiment(cfg)
        for field in ("mean_tau", "var_tau", "mean_R4", "ratio"):
            assert getattr(a, field) == getattr(b, field), field

    def accumulator_merge():
        values = rng.standard_normal(1000)
        whole = estimators.MomentAccumulator()
        left = estimators.MomentAccumulator()
        right = estimators.MomentAccumulator()
        for v in values:
            whole.add(float(v))
        for v in values[:400]:
            left.add(float(v))
        for v in values[400:]:
            right.add(float(v))
        merged = left.merge(right)
        assert abs(merged.mean - whole.mean) < 1e-12
        assert abs(merged.m2 - whole.m2) < 1e-9 * max(abs(whole.m2), 1)

    return [
        ("closed forms", closed_forms),
        ("moment/ratio identity", ratio_identity),
        ("threshold scaling semigroup", scaling_semigroup),
        ("gumbel cdf shape", gumbel_shape),
        ("gumbel inverse-transform KS", gumbel_sampling),
        ("p-norm examples", norms),
        ("experiment determinism", determinism_smoke),
        ("accumulator merge", accumulator_merge),
    ]


def _ks_against_cdf(z: np.ndarray) -> float:
    z = np.sort(z)
    cdf = analytic.gumbel_cdf(z)
    m = z.size
    hi = np.arange(1, m + 1) / m
    lo = np.arange(0, m) / m
    return float(max((hi - cdf).max(), (cdf - lo).max()))


def _cmd_check(_args) -> int:
    failures = 0
    for name, check in _self_checks():
        try:
            check()
        except AssertionError as exc:
            failures += 1
            print(f"FAIL  {name}: {exc}")
        else:
            print(f"ok    {name}")
    if failures:
        print(f"{failures} self-check(s) failed")
        return EXIT_RUNTIME
    print("all self-checks passed")
    return EXIT_OK


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "sweep":
            return _cmd_sweep(args)
        if args.command == "fig1":
            return _cmd_fig(args, harness.emit_fig1)
        if args.command == "fig2":
            return _cmd_fig(args, harness.emit_fig2)
        return _cmd_check(args)
    except TruncationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except harness.SweepError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME if isinstance(exc.cause, TruncationError) else EXIT_VALIDATION
    except ValueError as exc:  # ConfigError and any constraint violation
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    raise SystemExit(main())
