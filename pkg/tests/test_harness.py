import io
import math

import pytest
from hypothesis import given, strategies as st

from leveltrig import (
    ConfigError,
    ExperimentConfig,
    Level,
    Periodic,
    ResultRow,
    SweepSpec,
    TruncationError,
    emit_fig1,
    emit_fig2,
    parse_config,
    run_experiment,
    run_sweep,
    serialize_config,
    serialize_sweep,
    simulate_records,
)
from leveltrig.harness import (
    DEFAULT_MASTER_SEED,
    parse_document,
    read_rows_csv,
    rows_to_csv_text,
)

INF = math.inf


class TestParseConfig:
    def test_empty_document_yields_protocol_defaults(self):
        cfg = parse_config("")
        assert isinstance(cfg, ExperimentConfig)
        assert cfg.h == 1e-4
        assert cfg.runs == 20_000
        assert cfg.master_seed == DEFAULT_MASTER_SEED

    def test_infinity_norm_rule(self):
        cfg = parse_config("p = inf\nn = 10")
        assert cfg.n == 10
        assert cfg.rule == Level(p=INF, delta=1.0)

    def test_periodic_rule(self):
        cfg = parse_config("T = 0.5\nn = 3")
        assert cfg.rule == Periodic(period=0.5)

    def test_comments_and_blanks(self):
        cfg = parse_config("# protocol\n\nn = 4  # state dimension\np = 8\n")
        assert cfg.n == 4
        assert cfg.rule.p == 8.0

    def test_negative_step_names_key(self):
        with pytest.raises(ConfigError, match="h"):
            parse_config("h = -1")

    def test_unknown_key_names_key_and_line(self):
        with pytest.raises(ConfigError, match=r"line 2.*frobnicate"):
            parse_config("n = 2\nfrobnicate = 3")

    def test_duplicate_key(self):
        with pytest.raises(ConfigError, match="duplicate"):
            parse_config("n = 2\nn = 3")

    def test_type_mismatch_names_key(self):
        with pytest.raises(ConfigError, match="runs"):
            parse_config("runs = soon")

    def test_mutually_exclusive_rules(self):
        with pytest.raises(ConfigError, match="mutually exclusive"):
            parse_config("p = 2\nT = 1.0")

    def test_estimator_validation(self):
        with pytest.raises(ConfigError, match="estimator"):
            parse_config("estimator = psychic")
        cfg = parse_config("estimator = direct_integral")
        assert cfg.estimator == "direct_integral"

    def test_p_below_one_rejected(self):
        with pytest.raises(ConfigError, match="p"):
            parse_config("p = 0.5")

    def test_sweep_document(self):
        spec = parse_config("n_grid = 1, 2, 5\np_grid = 2, inf\ndelta = 2.0")
        assert isinstance(spec, SweepSpec)
        assert spec.n_grid == (1, 2, 5)
        assert spec.p_grid == (2.0, INF)
        assert spec.delta == 2.0

    def test_sweep_defaults(self):
        spec = parse_config("n_grid = 2, 4")
        assert spec.p_grid == (2.0, 8.0, INF)
        assert spec.delta == 1.0

    def test_sweep_document_carries_base_overrides(self):
        base, spec = parse_document("n_grid = 1,2\nruns = 500\nh = 1e-3")
        assert spec is not None
        assert base.runs == 500
        assert base.h == 1e-3

    def test_empty_grid_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("n_grid = ")


class TestRoundTrip:
    @pytest.mark.parametrize(
        "cfg",
        [
            ExperimentConfig(),
            ExperimentConfig(n=7, rule=Level(p=INF, delta=2.0), runs=5000),
            ExperimentConfig(n=2, rule=Periodic(period=0.25), h=1e-3),
            ExperimentConfig(rule=Level(p=3.5, delta=0.125), max_steps=1234, estimator="direct_integral"),
            ExperimentConfig(master_seed=2**63 + 11, ci_method="bootstrap"),
        ],
    )
    def test_config_round_trip(self, cfg):
        assert parse_config(serialize_config(cfg)) == cfg

    @given(
        st.integers(min_value=1, max_value=300),
        st.sampled_from([1.0, 1.5, 2.0, 8.0, INF]),
        st.floats(min_value=0.01, max_value=8.0),
        st.integers(min_value=1, max_value=10**6),
    )
    def test_config_round_trip_generated(self, n, p, delta, runs):
        cfg = ExperimentConfig(n=n, rule=Level(p=p, delta=delta), runs=runs)
        assert parse_config(serialize_config(cfg)) == cfg

    def test_sweep_round_trip(self):
        spec = SweepSpec(n_grid=(1, 5, 40), p_grid=(2.0, INF), delta=0.5)
        assert parse_config(serialize_sweep(spec)) == spec


class TestResultRowsIO:
    def _rows(self):
        return [
            ResultRow(
                n=3, p=2.0, delta=1.0, runs=100, h=1e-4,
                mean_tau=0.3301, var_tau=0.01, mean_R4=1.02,
                ratio=0.61, ci_low=0.60, ci_high=0.62,
                ks_gumbel=None, wall_time_s=1.25,
            ),
            ResultRow(
                n=5, p=INF, delta=1.0, runs=100, h=1e-4,
                mean_tau=0.41, var_tau=0.02, mean_R4=3.2,
                ratio=0.76, ci_low=0.75, ci_high=0.77,
                ks_gumbel=0.21, wall_time_s=2.5,
            ),
            ResultRow(
                n=2, p=None, delta=None, runs=100, h=1e-4,
                mean_tau=0.5, var_tau=0.0, mean_R4=1.9,
                ratio=1.01, ci_low=0.98, ci_high=1.04,
                ks_gumbel=None, wall_time_s=0.5,
            ),
        ]

    def test_csv_round_trip(self):
        rows = self._rows()
        text = rows_to_csv_text(rows)
        parsed = read_rows_csv(io.StringIO(text))
        assert parsed == rows

    def test_seventeen_significant_digits(self):
        row = self._rows()[0]
        row.ratio = 2.0 / 3.0
        text = rows_to_csv_text([row])
        assert "0.66666666666666663" in text

    def test_infinity_round_trips(self):
        text = rows_to_csv_text(self._rows())
        assert ",inf," in text


class TestEmitFig1:
    def _row(self, n, p, ratio, hw=0.01):
        return ResultRow(
            n=n, p=p, delta=1.0, runs=100, h=1e-4,
            mean_tau=0.1, var_tau=0.01, mean_R4=1.0,
            ratio=ratio, ci_low=ratio - hw, ci_high=ratio + hw,
        )

    def test_closed_form_column(self):
        rows = [self._row(n, 2.0, n / (n + 2.0)) for n in (1, 2, 10)]
        out = io.StringIO()
        emit_fig1(rows, out)
        lines = out.getvalue().strip().splitlines()
        assert lines[0] == "p,n,ratio,ci_low,ci_high,closed_form_2norm"
        closed = [float(line.split(",")[-1]) for line in lines[1:]]
        assert closed == pytest.approx([1 / 3, 0.5, 10 / 12], rel=1e-12)

    def test_single_row(self):
        out = io.StringIO()
        emit_fig1([self._row(4, 8.0, 0.8)], out)
        lines = out.getvalue().strip().splitlines()
        assert len(lines) == 2
        assert lines[1].startswith("8,4,")
        assert lines[1].endswith(",")  # no closed form away from p = 2

    def test_requires_level_rows(self):
        periodic_only = [
            ResultRow(
                n=1, p=None, delta=None, runs=10, h=1e-4,
                mean_tau=1.0, var_tau=0.0, mean_R4=1.0,
                ratio=1.0, ci_low=1.0, ci_high=1.0,
            )
        ]
        with pytest.raises(ConfigError):
            emit_fig1(periodic_only, io.StringIO())


class TestEmitFig2:
    def _row(self, n, p, ratio, hw=0.005):
        return ResultRow(
            n=n, p=p, delta=1.0, runs=100, h=1e-4,
            mean_tau=0.1, var_tau=0.01, mean_R4=1.0,
            ratio=ratio, ci_low=ratio - hw, ci_high=ratio + hw,
        )

    def test_unit_dimension_quotients_are_one(self):
        rows = [
            self._row(1, 2.0, 0.3331),
            self._row(1, 8.0, 0.3339),
            self._row(1, INF, 0.3344),
        ]
        out = io.StringIO()
        emit_fig2(rows, out)
        lines = out.getvalue().strip().splitlines()
        assert len(lines) == 3
        for line in lines[1:]:
            _, _, quotient, lo, hi = line.split(",")
            assert float(lo) <= 1.0 <= float(hi)
            assert float(quotient) == pytest.approx(1.0, rel=0.01)

    def test_larger_p_has_larger_quotient(self):
        rows = [
            self._row(10, 2.0, 0.83),
            self._row(10, 8.0, 0.87),
            self._row(10, INF, 0.89),
        ]
        out = io.StringIO()
        emit_fig2(rows, out)
        lines = out.getvalue().strip().splitlines()
        quotient = {line.split(",")[0]: float(line.split(",")[2]) for line in lines[1:]}
        assert quotient["inf"] > quotient["8"]

    def test_missing_baseline_names_dimension(self):
        rows = [self._row(10, 2.0, 0.83), self._row(12, 8.0, 0.9)]
        with pytest.raises(ConfigError, match="n=12"):
            emit_fig2(rows, io.StringIO())


def _strip_wall_time(csv_text: str) -> str:
    lines = csv_text.strip().splitlines()
    return "\n".join(",".join(line.split(",")[:-1]) for line in lines)


class TestRunExperiment:
    def test_deterministic_and_thread_invariant(self):
        cfg = ExperimentConfig(n=3, rule=Level(p=2.0), h=1e-3, runs=1500)
        texts = {
            threads: _strip_wall_time(rows_to_csv_text([run_experiment(cfg, threads=threads)]))
            for threads in (1, 4, 8)
        }
        assert texts[1] == texts[4] == texts[8]

    def test_records_pure_function_of_config(self):
        cfg = ExperimentConfig(n=2, rule=Level(p=INF), h=1e-3, runs=300)
        assert simulate_records(cfg) == simulate_records(cfg, threads=4)

    def test_offset_changes_draws(self):
        cfg = ExperimentConfig(n=2, rule=Level(p=2.0), h=1e-3, runs=50)
        assert simulate_records(cfg, run_offset=0) != simulate_records(cfg, run_offset=50)

    def test_periodic_experiment_ratio_near_one(self):
        cfg = ExperimentConfig(n=2, rule=Periodic(period=0.25), h=1e-3, runs=2000)
        row = run_experiment(cfg)
        assert row.p is None
        assert row.mean_tau == 0.25
        assert row.ratio == pytest.approx(1.0, abs=0.08)

    def test_truncation_aborts_with_run_index(self):
        cfg = ExperimentConfig(n=1, rule=Level(p=2.0, delta=5.0), h=1e-3, runs=4, max_steps=8)
        with pytest.raises(TruncationError) as err:
            run_experiment(cfg)
        assert err.value.run_index == 0

    def test_direct_estimator_selection(self):
        cfg = ExperimentConfig(
            n=2, rule=Level(p=2.0), h=1e-3, runs=400, estimator="direct_integral"
        )
        row = run_experiment(cfg)
        assert row.ratio == pytest.approx(0.5, abs=0.1)

    def test_ks_column_only_for_unit_max_norm(self):
        cfg = ExperimentConfig(n=4, rule=Level(p=INF), h=1e-3, runs=300)
        assert run_experiment(cfg).ks_gumbel is not None
        cfg2 = ExperimentConfig(n=4, rule=Level(p=2.0), h=1e-3, runs=300)
        assert run_experiment(cfg2).ks_gumbel is None


class TestRunSweep:
    def test_cells_and_schedule(self, capsys):
        spec = SweepSpec(n_grid=(1, 2), p_grid=(2.0,), delta=1.0)
        base = ExperimentConfig(h=1e-3, runs=400)
        rows = run_sweep(spec, base)
        assert [(row.n, row.p) for row in rows] == [(1, 2.0), (2, 2.0)]
        # cell 1 must reuse the runs drawn at offset 1 * runs
        cfg_cell = ExperimentConfig(n=2, rule=Level(p=2.0), h=1e-3, runs=400)
        direct = run_experiment(cfg_cell, run_offset=400)
        assert rows[1].ratio == direct.ratio

    def test_progress_stream(self):
        spec = SweepSpec(n_grid=(1,), p_grid=(2.0,))
        base = ExperimentConfig(h=1e-3, runs=100)
        progress = io.StringIO()
        run_sweep(spec, base, progress=progress)
        assert "[1/1] n=1 p=2" in progress.getvalue()

    def test_grid_ratios_match_closed_form_loosely(self):
        spec = SweepSpec(n_grid=(1, 2), p_grid=(2.0,))
        base = ExperimentConfig(h=1e-3, runs=2000)
        rows = run_sweep(spec, base, progress=io.StringIO())
        assert rows[0].ratio == pytest.approx(1 / 3, rel=0.1)
        assert rows[1].ratio == pytest.approx(0.5, rel=0.1)

    def test_sweep_validation(self):
        with pytest.raises(ConfigError):
            SweepSpec(n_grid=(), p_grid=(2.0,))
