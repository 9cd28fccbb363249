"""Qualitative behavior of the shipped four-class cell."""

import itertools

import pytest

from classcac.config import BaselineKind, ExperimentConfig, SimSettings, baseline_variant
from classcac.evaluators import Mode, allocation_knee, evaluate_analytic, evaluate_simulation, resolve_traffic
from classcac.helpers import parse_rates
from classcac.runner import ExperimentRunner

VOICE, WEB, VIDEO, BACKGROUND = range(4)
SHORT_RUN = SimSettings(seed=7, replications=4, warmup_s=500, horizon_s=4500)


@pytest.fixture
def table1_sweep(table1_config: ExperimentConfig):
    """Analytic sweep of the shipped cell."""
    return ExperimentRunner(table1_config).sweep(Mode.ANALYTIC, parse_rates("0.05:1:0.05"))


def test_web_keeps_its_request_at_light_load(table1_sweep):
    knee = allocation_knee(table1_sweep, WEB)

    assert knee is not None
    assert 0.3 <= knee <= 0.5
    assert table1_sweep[0].alloc_kbps[WEB] == pytest.approx(120)
    assert table1_sweep[-1].alloc_kbps[WEB] < 100


def test_voice_is_never_degraded(table1_sweep):
    assert all(row.alloc_kbps[VOICE] == pytest.approx(32) for row in table1_sweep)


@pytest.mark.parametrize("total_rate", [0.2, 0.5, 1.0, 2.0])
def test_priority_ordering(table1_config: ExperimentConfig, total_rate: float):
    row = evaluate_analytic(table1_config, resolve_traffic(table1_config, total_rate))

    assert row.p_drop is not None
    assert row.p_drop <= row.p_block[VOICE] <= row.p_block[WEB] <= row.p_block[VIDEO] <= row.p_block[BACKGROUND]


def test_handovers_are_protected(table1_config: ExperimentConfig):
    heavy = evaluate_analytic(table1_config, resolve_traffic(table1_config, 2.0))
    nominal = evaluate_analytic(table1_config, resolve_traffic(table1_config, 1.0))

    assert heavy.p_drop is not None
    assert heavy.p_drop <= 1e-3
    assert nominal.p_block[VOICE] > 0
    assert nominal.p_block[BACKGROUND] >= 100 * nominal.p_block[VOICE]


def test_forced_termination_against_rigid_cell(table1_config: ExperimentConfig):
    # GIVEN the same traffic offered to the adaptive cell and to a cell that never degrades calls
    rigid_config = baseline_variant(table1_config, BaselineKind.RIGID)

    # WHEN
    adaptive = evaluate_analytic(table1_config, resolve_traffic(table1_config, 1.0))
    rigid = evaluate_analytic(rigid_config, resolve_traffic(rigid_config, 1.0))

    # THEN
    assert adaptive.p_forced is not None
    assert rigid.p_forced is not None
    assert adaptive.p_forced <= 0.5 * rigid.p_forced


def test_simulated_priority_ordering(table1_config: ExperimentConfig):
    # GIVEN a short run of the shipped cell at a load where every class sees blocking
    config = table1_config.copy(update={"sim": SHORT_RUN})

    # WHEN
    row = evaluate_simulation(config, resolve_traffic(config, 2.0))

    # THEN each probability stays below the next one within the confidence bounds
    names = ["p_drop", *(f"p_block_{c.name}" for c in config.classes)]
    means = [row.p_drop, *row.p_block]
    assert all(mean is not None for mean in means)
    assert row.p_block[BACKGROUND] > 0
    for (lower, name_lower), (upper, name_upper) in itertools.pairwise(zip(means, names, strict=True)):
        slack = 3 * (row.std_errors[name_lower] + row.std_errors[name_upper])
        assert lower <= upper + slack, f"{name_lower} above {name_upper}"


def test_forced_termination_against_adaptive_cell(table1_config: ExperimentConfig):
    # GIVEN the same traffic offered to a cell that degrades calls without reserving room for handovers
    adaptive_config = baseline_variant(table1_config, BaselineKind.ADAPTIVE)

    # WHEN
    proposed = evaluate_analytic(table1_config, resolve_traffic(table1_config, 1.0))
    baseline = evaluate_analytic(adaptive_config, resolve_traffic(adaptive_config, 1.0))

    # THEN handover reservation keeps forced termination far under the baseline, not within a quarter of it
    assert proposed.p_forced is not None
    assert baseline.p_forced is not None
    assert baseline.p_forced > 0
    assert proposed.p_forced < 0.75 * baseline.p_forced
