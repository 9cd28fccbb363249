"""Experiment configuration documents."""

from enum import StrEnum
import functools
import json
import logging
from pathlib import Path
from typing import Any

from pydantic import ValidationError, root_validator, validator

from classcac.cellmodel.chain import ThresholdSet, derive_thresholds
from classcac.cellmodel.exceptions import (
    ConfigFileMissing,
    ConfigInvariantError,
    ConfigSchemaError,
    InvariantValueError,
)
from classcac.cellmodel.model import HandoverMode, SimConfig, StrictModel, SystemConfig

from .const import DEFAULT_HORIZON_S, DEFAULT_REPLICATIONS, DEFAULT_SEED

_LOGGER = logging.getLogger(__name__)

CONFIGS_PATH = Path(__file__).parent / "configs"

INVARIANT_ERROR_TYPE = "value_error." + InvariantValueError.code


class HandoverConfig(StrictModel):
    """Handover arrival process."""

    mode: HandoverMode
    rate: float | None = None
    dwell_mean_s: float | None = None

    @root_validator(skip_on_failure=True)
    def _mode_parameters(cls, values: dict[str, Any]) -> dict[str, Any]:
        rate, dwell = values.get("rate"), values.get("dwell_mean_s")
        if dwell is not None and dwell <= 0:
            raise InvariantValueError(f"dwell_mean_s must be > 0, got {dwell}")
        if values["mode"] == HandoverMode.EXOGENOUS:
            if rate is None or rate < 0:
                raise InvariantValueError("exogenous handover needs a rate >= 0")
        elif dwell is None:
            raise InvariantValueError("endogenous handover needs dwell_mean_s")
        elif rate is not None:
            raise InvariantValueError("endogenous handover derives its rate, remove 'rate'")
        return values


class ArrivalsConfig(StrictModel):
    """Offered traffic."""

    new_rate_total: float
    handover: HandoverConfig

    @validator("new_rate_total")
    def _non_negative(cls, value: float) -> float:
        if value < 0:
            raise InvariantValueError(f"new_rate_total must be >= 0, got {value}")
        return value


class ThresholdsConfig(StrictModel):
    """Explicit chain thresholds."""

    N: int
    K: tuple[int, ...]

    @root_validator(skip_on_failure=True)
    def _monotone(cls, values: dict[str, Any]) -> dict[str, Any]:
        try:
            ThresholdSet(N=values["N"], K=values["K"])
        except ConfigInvariantError as err:
            raise InvariantValueError(str(err)) from err
        return values

    def to_threshold_set(self) -> ThresholdSet:
        """Return the library threshold set."""
        return ThresholdSet(N=self.N, K=self.K)


class MuIConfig(StrictModel):
    """Degraded-state service law: a rigid fraction phi or an explicit rate table."""

    phi: float | None = None
    table: tuple[float, ...] | None = None

    @root_validator(skip_on_failure=True)
    def _exactly_one(cls, values: dict[str, Any]) -> dict[str, Any]:
        phi, table = values.get("phi"), values.get("table")
        if (phi is None) == (table is None):
            raise InvariantValueError("mu_i needs exactly one of 'phi' or 'table'")
        if phi is not None and not 0 <= phi <= 1:
            raise InvariantValueError(f"phi must lie in [0, 1], got {phi}")
        if table is not None and any(rate <= 0 for rate in table):
            raise InvariantValueError("mu_i table rates must be > 0")
        return values


class SimSettings(StrictModel):
    """Simulation defaults of an experiment."""

    seed: int = DEFAULT_SEED
    replications: int = DEFAULT_REPLICATIONS
    warmup_s: float | None = None
    horizon_s: float = DEFAULT_HORIZON_S

    @root_validator(skip_on_failure=True)
    def _ranges(cls, values: dict[str, Any]) -> dict[str, Any]:
        if not 0 <= values["seed"] < 2**64:
            raise InvariantValueError(f"seed must be an unsigned 64-bit integer, got {values['seed']}")
        if values["replications"] < 1:
            raise InvariantValueError("replications must be >= 1")
        if values["horizon_s"] <= 0:
            raise InvariantValueError("horizon_s must be > 0")
        if values.get("warmup_s") is not None and values["warmup_s"] < 0:
            raise InvariantValueError("warmup_s must be >= 0")
        return values


class ExperimentConfig(SystemConfig):
    """Complete experiment document: the cell plus its traffic and evaluator settings."""

    description: str | None = None
    arrivals: ArrivalsConfig
    duration_mean_s: float
    thresholds: ThresholdsConfig | None = None
    mu_i: MuIConfig | None = None
    sim: SimSettings | None = None

    @validator("duration_mean_s")
    def _positive_duration(cls, value: float) -> float:
        if value <= 0:
            raise InvariantValueError(f"duration_mean_s must be > 0, got {value}")
        return value

    @root_validator(skip_on_failure=True)
    def _chain_settings(cls, values: dict[str, Any]) -> dict[str, Any]:
        system = SystemConfig(capacity_kbps=values["capacity_kbps"], classes=values["classes"])
        thresholds: ThresholdsConfig | None = values.get("thresholds")
        try:
            levels = derive_thresholds(system, thresholds.to_threshold_set() if thresholds else None)
        except ConfigInvariantError as err:
            raise InvariantValueError(str(err)) from err
        mu_i: MuIConfig | None = values.get("mu_i")
        if mu_i and mu_i.table is not None and len(mu_i.table) != levels.top - levels.N:
            raise InvariantValueError(f"mu_i table needs {levels.top - levels.N} rates (states N+1..K[0])")
        if mu_i and mu_i.table is not None and any(rate > 1 / values["duration_mean_s"] for rate in mu_i.table):
            raise InvariantValueError("mu_i table rates cannot exceed 1 / duration_mean_s")
        return values

    @property
    def system(self) -> SystemConfig:
        """Return the cell without its traffic settings."""
        return SystemConfig(capacity_kbps=self.capacity_kbps, classes=self.classes)

    @property
    def handover_mode(self) -> HandoverMode:
        """Handover generation mode."""
        return self.arrivals.handover.mode

    @property
    def dwell_mean_s(self) -> float | None:
        """Mean cell dwell time, if configured."""
        return self.arrivals.handover.dwell_mean_s

    @property
    def service_rate(self) -> float:
        """Base per-call service rate."""
        return 1 / self.duration_mean_s

    @property
    def threshold_override(self) -> ThresholdSet | None:
        """Explicit thresholds, if any."""
        return self.thresholds.to_threshold_set() if self.thresholds else None

    @property
    def sim_settings(self) -> SimSettings:
        """Simulation settings with defaults filled in."""
        return self.sim or SimSettings()


class BaselineKind(StrEnum):
    """Comparison schemes without priorities."""

    ADAPTIVE = "adaptive"
    RIGID = "rigid"


def parse_config(path: Path | str) -> ExperimentConfig:
    """Load and validate an experiment document."""

    path = Path(path)
    if not path.is_file():
        raise ConfigFileMissing(f"configuration file {path} not found")
    try:
        with open(path, encoding="utf-8") as f:
            obj = json.load(f)
    except json.JSONDecodeError as err:
        raise ConfigSchemaError(f"{path}: invalid JSON: {err}") from err
    return parse_config_obj(obj, source=str(path))


def parse_config_obj(obj: Any, source: str = "<config>") -> ExperimentConfig:
    """Validate an already decoded experiment document."""

    try:
        return ExperimentConfig.parse_obj(obj)
    except ValidationError as err:
        errors = err.errors()
        _LOGGER.debug("Configuration %s rejected: %s", source, errors)
        if all(e["type"] == INVARIANT_ERROR_TYPE for e in errors):
            raise ConfigInvariantError(f"{source}: {err}") from err
        raise ConfigSchemaError(f"{source}: {err}") from err


@functools.lru_cache(maxsize=8)
def load_shipped_config(name: str) -> ExperimentConfig:
    """Load one of the experiment documents shipped with the package."""
    filename = name if name.endswith(".json") else f"{name}.json"
    return parse_config(CONFIGS_PATH / filename)


def baseline_variant(config: ExperimentConfig, kind: BaselineKind) -> ExperimentConfig:
    """Derive a non-priority comparison scheme from a configuration."""

    priorities = config.class_count + 1
    classes = [
        spec.copy(update={"gamma": (spec.gamma[0] if kind == BaselineKind.ADAPTIVE else 0.0,) * priorities})
        for spec in config.classes
    ]
    thresholds = None
    if config.thresholds:
        top = config.thresholds.K[0] if kind == BaselineKind.ADAPTIVE else config.thresholds.N
        thresholds = ThresholdsConfig(N=config.thresholds.N, K=(top,) * priorities)
    mu_i = config.mu_i if config.mu_i and config.mu_i.phi is not None else None
    return config.copy(update={"classes": tuple(classes), "thresholds": thresholds, "mu_i": mu_i})


def build_sim_config(
    config: ExperimentConfig,
    *,
    new_rate: float,
    handover_rate: float,
    handover_mode: HandoverMode | None = None,
    seed: int | None = None,
    replications: int | None = None,
) -> SimConfig:
    """Return the simulator parameters for one traffic point."""

    settings = config.sim_settings
    mode = handover_mode or config.handover_mode
    try:
        return SimConfig(
            system=config.system,
            new_rate_total=new_rate,
            handover_mode=mode,
            handover_rate=handover_rate if mode == HandoverMode.EXOGENOUS else 0.0,
            dwell_mean_s=config.dwell_mean_s,
            duration_mean_s=config.duration_mean_s,
            seed=settings.seed if seed is None else seed,
            replications=replications or settings.replications,
            warmup_s=settings.warmup_s,
            horizon_s=settings.horizon_s,
        )
    except ValidationError as err:
        raise ConfigInvariantError(f"invalid simulation settings: {err}") from err
