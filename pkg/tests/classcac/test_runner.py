"""Tests for the experiment runner."""

import pytest

from classcac.cellmodel.streams import RNG_ALGORITHM
from classcac.config import ExperimentConfig, parse_config_obj
from classcac.const import EXACT_REGIME_BUDGET
from classcac.evaluators import Mode
from classcac.runner import COMMAND_POINT, COMMAND_SWEEP, Comparison, ExperimentRunner
from tests.classcac.constants import erlang_document

LONG_RUN = {"seed": 11, "replications": 10, "warmup_s": 50, "horizon_s": 50_000}


def test_validate_exact_regime():
    # GIVEN a single rigid class simulated long enough for tight bounds
    runner = ExperimentRunner(parse_config_obj(erlang_document(5, 3.0, sim=LONG_RUN)))

    # WHEN
    report = runner.validate()

    # THEN the chain matches the exact solution and the simulator stays within three standard errors
    assert runner.exact_regime
    assert report.analytic_budget == EXACT_REGIME_BUDGET
    assert [c.metric for c in report.comparisons] == ["p_drop", "p_block_unit", "utilization", "alloc_unit"]
    assert all(c.analytic_ok for c in report.comparisons)
    assert all(c.simulated_ok for c in report.comparisons)
    assert report.passed
    assert report.notes == []
    text = report.render()
    assert "analytic budget: 1e-09" in text
    assert text.endswith("result: PASS\n")


def test_validate_rare_blocking():
    # GIVEN a lightly loaded cell where no replication sees a blocked call
    runner = ExperimentRunner(parse_config_obj(erlang_document(5, 0.3)))

    # WHEN
    report = runner.validate()

    # THEN the rule-of-three bound keeps the simulator estimate acceptable
    blocking = next(c for c in report.comparisons if c.metric == "p_block_unit")
    assert blocking.oracle == pytest.approx(1.50016e-05, rel=1e-4)
    assert blocking.std_error > 0
    assert blocking.simulated_ok


def test_validate_approximate_regime(desk_config: ExperimentConfig):
    # GIVEN
    runner = ExperimentRunner(desk_config)

    # WHEN
    report = runner.validate()

    # THEN
    assert not runner.exact_regime
    assert report.analytic_budget is None
    assert [c.metric for c in report.comparisons] == [
        "p_drop",
        "p_block_voice",
        "p_block_data",
        "utilization",
        "alloc_voice",
        "alloc_data",
    ]
    assert all(c.analytic_ok for c in report.comparisons)
    assert report.passed
    assert report.notes == ["analytic chain is an approximation for this configuration"]
    text = report.render()
    assert "analytic budget: none (approximation gap reported only)" in text
    assert text.endswith("result: PASS\n")


def test_validate_single_replication():
    runner = ExperimentRunner(parse_config_obj(erlang_document(2, 1.0)), replications=1)

    report = runner.validate()

    assert "fewer than two replications: simulator bounds are infinite" in report.notes
    assert all(c.simulated_ok for c in report.comparisons)


def test_comparison_budgets():
    comparison = Comparison(
        metric="p_drop", analytic=0.11, oracle=0.1, simulated=0.13, std_error=0.01, analytic_budget=1e-9
    )

    assert comparison.simulated_delta == pytest.approx(0.03)
    assert comparison.simulated_ok
    assert comparison.relative(comparison.analytic_delta) == pytest.approx(0.1)
    assert not comparison.analytic_ok
    assert Comparison("p_drop", 0.5, 0.0, 0.0, 0.0, None).relative(0.5) is None
    assert not Comparison("p_drop", None, 0.1, 0.2, 0.01, None).simulated_ok


def test_analytic_sweep(table1_config: ExperimentConfig):
    rows = ExperimentRunner(table1_config).sweep(Mode.ANALYTIC, [2.0, 0.5, 1.0])

    assert [row.lambda_total for row in rows] == [0.5, 1.0, 2.0]
    drops = [row.p_drop for row in rows]
    assert drops == sorted(drops)
    assert all(row.error == "" for row in rows)


def test_oracle_sweep_past_the_cap(table1_config: ExperimentConfig, caplog):
    # GIVEN a cell far larger than the state cap
    runner = ExperimentRunner(table1_config, cap=1_000)

    # WHEN
    rows = runner.sweep(Mode.ORACLE, [0.5, 1.0])

    # THEN every row is reported as skipped
    assert [row.error for row in rows] == ["cap_exceeded", "cap_exceeded"]
    assert all(row.p_drop is None for row in rows)
    assert "skipped" in caplog.text


def test_variants(table1_config: ExperimentConfig, desk_config: ExperimentConfig):
    runner = ExperimentRunner(table1_config)

    assert runner.variants(Mode.ANALYTIC) == {
        "mu_i_law": "phi-blend(phi=0.7)",
        "handover_mode": "endogenous",
        "threshold_source": "derived",
        "forced_termination": "formula",
        "rng": RNG_ALGORITHM,
    }
    assert runner.variants(Mode.SIMULATE)["forced_termination"] == "measured"
    assert runner.variants(Mode.ORACLE)["handover_mode"] == "exogenous (resolved from endogenous)"
    desk = ExperimentRunner(desk_config).variants(Mode.SIMULATE)
    assert desk["mu_i_law"] == "phi-blend(rigid share)"
    assert desk["forced_termination"] == "formula"


def test_manifest(table1_config: ExperimentConfig):
    runner = ExperimentRunner(table1_config, replications=3)

    simulated = runner.manifest(Mode.SIMULATE, COMMAND_SWEEP, [2.0, 1.0])
    analytic = runner.manifest(Mode.ANALYTIC, COMMAND_POINT, None)

    assert simulated.seed == 20240601
    assert simulated.rates == [1.0, 2.0]
    assert simulated.replications == 3
    assert analytic.seed is None
    assert analytic.rates is None
    assert analytic.config_digest == simulated.config_digest
    assert ExperimentRunner(table1_config, seed=5).seed == 5
