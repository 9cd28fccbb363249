"""Common test tools."""

import json
from pathlib import Path
from typing import Any

import pytest

from classcac.cellmodel.model import SystemConfig
from classcac.config import ExperimentConfig, load_shipped_config, parse_config_obj


@pytest.fixture
def table1_config() -> ExperimentConfig:
    """Shipped four-class experiment."""
    return load_shipped_config("table1")


@pytest.fixture
def table1_system(table1_config: ExperimentConfig) -> SystemConfig:
    """Shipped four-class cell."""
    return table1_config.system


@pytest.fixture
def desk_config() -> ExperimentConfig:
    """Shipped two-class desk-scale experiment."""
    return load_shipped_config("desk_adaptive")


@pytest.fixture
def write_config(tmp_path: Path):
    """Write an experiment document to a temporary file and return its path."""

    def _write(document: dict[str, Any], name: str = "experiment.json") -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(document), encoding="utf-8")
        return path

    return _write


def create_experiment(
    system: dict[str, Any],
    new_rate: float = 1.0,
    handover_rate: float = 0.5,
    duration_mean_s: float = 1.0,
    **overrides: Any,
) -> ExperimentConfig:
    """Build an exogenous experiment around a cell document."""
    document = {
        **system,
        "arrivals": {"new_rate_total": new_rate, "handover": {"mode": "exogenous", "rate": handover_rate}},
        "duration_mean_s": duration_mean_s,
        **overrides,
    }
    return parse_config_obj(document, source="test")
