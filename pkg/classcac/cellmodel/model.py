"""Cell and traffic configuration models."""

from enum import StrEnum
from typing import Any

from pydantic import BaseModel, Extra, root_validator, validator

from .exceptions import InvariantValueError

MIX_SUM_TOLERANCE = 1e-9


class StrictModel(BaseModel):
    """Immutable model rejecting unknown keys."""

    class Config:
        """Strict parsing."""

        extra = Extra.forbid
        allow_mutation = False


class ClassSpec(StrictModel):
    """One traffic class of the cell.

    ``index`` is the 1-based priority of the class.  Documents may leave it out;
    it is then taken from the position in ``classes``.  Manifests write it back,
    and a stated index must match the position.
    """

    name: str
    requested_kbps: float
    gamma: tuple[float, ...]
    elastic: bool
    mix_fraction: float
    index: int = 0

    @validator("requested_kbps")
    def _positive_request(cls, value: float) -> float:
        if value <= 0:
            raise InvariantValueError(f"requested_kbps must be > 0, got {value}")
        return value

    @validator("gamma")
    def _degradation_ordering(cls, value: tuple[float, ...]) -> tuple[float, ...]:
        if not value:
            raise InvariantValueError("gamma row must not be empty")
        ordered = value[0] < 1 and value[-1] >= 0 and all(a >= b for a, b in zip(value, value[1:], strict=False))
        if not ordered:
            raise InvariantValueError(
                f"degradation row ordering violated (need 1 > gamma[0] >= ... >= gamma[M] >= 0): {list(value)}"
            )
        return value

    @validator("mix_fraction")
    def _mix_in_range(cls, value: float) -> float:
        if not 0 <= value <= 1:
            raise InvariantValueError(f"mix_fraction must lie in [0, 1], got {value}")
        return value

    @root_validator(skip_on_failure=True)
    def _rigid_has_no_degradation(cls, values: dict[str, Any]) -> dict[str, Any]:
        if not values["elastic"] and any(g != 0 for g in values["gamma"]):
            raise InvariantValueError(f"real-time class {values['name']} must have an all-zero gamma row")
        return values

    def min_kbps(self, p: int) -> float:
        """Return the bandwidth floor of a call of this class for priority p."""
        return self.requested_kbps * (1 - self.gamma[p])


class SystemConfig(StrictModel):
    """Cell capacity and its ordered traffic classes.

    The class order defines new-call priorities: the call of class m arrives
    with priority m, and priority 0 is shared by handover calls of every class.
    """

    capacity_kbps: float
    classes: tuple[ClassSpec, ...]

    @root_validator(pre=True)
    def _number_classes(cls, values: dict[str, Any]) -> dict[str, Any]:
        classes = values.get("classes")
        if not isinstance(classes, list | tuple):
            return values
        numbered: list[Any] = []
        for position, item in enumerate(classes, start=1):
            if isinstance(item, dict):
                numbered.append({"index": position, **item})
            elif isinstance(item, ClassSpec) and item.index == 0:
                numbered.append(item.copy(update={"index": position}))
            else:
                numbered.append(item)
        return {**values, "classes": numbered}

    @validator("classes")
    def _non_empty(cls, value: tuple[ClassSpec, ...]) -> tuple[ClassSpec, ...]:
        if not value:
            raise InvariantValueError("at least one traffic class is required")
        return value

    @root_validator(skip_on_failure=True)
    def _system_invariants(cls, values: dict[str, Any]) -> dict[str, Any]:
        classes: tuple[ClassSpec, ...] = values["classes"]
        priorities = len(classes) + 1
        if [c.index for c in classes] != list(range(1, len(classes) + 1)):
            raise InvariantValueError("class indices must be contiguous 1..M")
        for spec in classes:
            if len(spec.gamma) != priorities:
                raise InvariantValueError(
                    f"class {spec.name} needs {priorities} gamma values (p = 0..M), got {len(spec.gamma)}"
                )
        mix = sum(c.mix_fraction for c in classes)
        if abs(mix - 1) > MIX_SUM_TOLERANCE:
            raise InvariantValueError(f"mix fractions must sum to 1, got {mix!r}")
        largest = max(c.requested_kbps for c in classes)
        if values["capacity_kbps"] < largest:
            raise InvariantValueError(
                f"capacity_kbps {values['capacity_kbps']} cannot hold one {largest} kbps call"
            )
        return values

    @property
    def class_count(self) -> int:
        """Number of traffic classes M."""
        return len(self.classes)

    @property
    def priorities(self) -> range:
        """Priority indices 0..M."""
        return range(len(self.classes) + 1)

    def spec(self, m: int) -> ClassSpec:
        """Return the class with 1-based index m."""
        return self.classes[m - 1]


class HandoverMode(StrEnum):
    """How handover arrivals are generated."""

    EXOGENOUS = "exogenous"
    ENDOGENOUS = "endogenous"


class SimConfig(StrictModel):
    """Simulation run parameters for one cell."""

    system: SystemConfig
    new_rate_total: float
    handover_mode: HandoverMode = HandoverMode.EXOGENOUS
    handover_rate: float = 0.0
    dwell_mean_s: float | None = None
    duration_mean_s: float
    seed: int = 0
    replications: int = 1
    warmup_s: float | None = None
    horizon_s: float

    @validator("new_rate_total", "handover_rate")
    def _non_negative_rate(cls, value: float) -> float:
        if value < 0:
            raise InvariantValueError(f"arrival rates must be >= 0, got {value}")
        return value

    @validator("duration_mean_s", "horizon_s")
    def _positive_time(cls, value: float) -> float:
        if value <= 0:
            raise InvariantValueError(f"times must be > 0, got {value}")
        return value

    @validator("seed")
    def _seed_range(cls, value: int) -> int:
        if not 0 <= value < 2**64:
            raise InvariantValueError(f"seed must be an unsigned 64-bit integer, got {value}")
        return value

    @validator("replications")
    def _at_least_one(cls, value: int) -> int:
        if value < 1:
            raise InvariantValueError("replications must be >= 1")
        return value

    @root_validator(skip_on_failure=True)
    def _mode_and_warmup(cls, values: dict[str, Any]) -> dict[str, Any]:
        dwell = values.get("dwell_mean_s")
        if dwell is not None and dwell <= 0:
            raise InvariantValueError(f"dwell_mean_s must be > 0, got {dwell}")
        if values["handover_mode"] == HandoverMode.ENDOGENOUS and dwell is None:
            raise InvariantValueError("endogenous handover needs dwell_mean_s")
        if values.get("warmup_s") is None:
            values["warmup_s"] = 0.1 * values["horizon_s"]
        elif values["warmup_s"] < 0:
            raise InvariantValueError("warmup_s must be >= 0")
        return values

    @property
    def service_rate(self) -> float:
        """Base per-call service rate at full allocation."""
        return 1 / self.duration_mean_s
