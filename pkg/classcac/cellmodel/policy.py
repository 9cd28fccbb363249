"""Admission control and bandwidth reallocation policy.

Classes and priorities use the model's 1-based class indices: a new call of
class m arrives with priority m, a handover call with priority 0.  All calls
of a class share one allocation, obtained by scaling the depth row of the
active profile with a single level in [0, 1].
"""

from collections.abc import Iterable
from dataclasses import dataclass, replace
from enum import StrEnum

from .exceptions import ContractViolation, InfeasibleRebalance
from .model import ClassSpec, SystemConfig

EPSILON_KBPS = 1e-6
"""Tolerance for every capacity comparison."""


@dataclass(frozen=True)
class CellState:
    """Occupancy and current allocations of the cell.

    Occupancy counts are integers for live cells; mean-field compositions of the
    analytic chain use fractional counts.
    """

    occupancy: tuple[float, ...]
    alloc_kbps: tuple[float, ...]
    profile: int = 0
    level: float = 0.0

    @classmethod
    def empty(cls, config: SystemConfig) -> "CellState":
        """Return the idle cell with every allocation at its requested bandwidth."""
        return cls(
            occupancy=(0,) * config.class_count,
            alloc_kbps=tuple(c.requested_kbps for c in config.classes),
        )

    def key(self) -> tuple[tuple[float, ...], int | None]:
        """Identify the state; the profile only matters while calls are degraded."""
        return (self.occupancy, self.profile if self.level > 0 else None)

    def count(self, m: int) -> float:
        """Return the number of calls of class m."""
        return self.occupancy[m - 1]


class RejectReason(StrEnum):
    """Why an arrival was refused."""

    BELOW_FLOOR = "insufficient_bandwidth_at_floor"


@dataclass(frozen=True)
class AdmissionDecision:
    """Outcome of an admission request."""

    accepted: bool
    plan: CellState | None = None
    reason: RejectReason | None = None


def min_allocation(spec: ClassSpec, p: int) -> float:
    """Return the lowest bandwidth a call of this class may get to admit priority p."""
    if not 0 <= p < len(spec.gamma):
        raise ContractViolation(f"priority {p} out of range for class {spec.name}")
    return spec.min_kbps(p)


def free_bandwidth(state: CellState, config: SystemConfig) -> float:
    """Return the capacity not allocated to any call."""
    used = sum(n * a for n, a in zip(state.occupancy, state.alloc_kbps, strict=True))
    return config.capacity_kbps - used


def releasable_bandwidth(state: CellState, config: SystemConfig, p: int) -> float:
    """Return what existing calls could give up down to their priority-p floors.

    Terms of classes already below their p floor are negative and kept as is.
    """
    return sum(
        n * (a - min_allocation(spec, p))
        for n, a, spec in zip(state.occupancy, state.alloc_kbps, config.classes, strict=True)
    )


def available_bandwidth(state: CellState, config: SystemConfig, p: int) -> float:
    """Return the capacity left if every call dropped to its priority-p floor."""
    return config.capacity_kbps - _floor_demand(state.occupancy, config, p)


def admit(state: CellState, config: SystemConfig, m_req: int, p: int) -> AdmissionDecision:
    """Decide on a class m_req arrival with priority p and plan the new allocations."""

    _check_class(config, m_req)
    if p not in (0, m_req):
        raise ContractViolation(f"class {m_req} arrivals use priority 0 or {m_req}, not {p}")

    spec = config.spec(m_req)
    occupancy = _bump(state.occupancy, m_req, 1)

    # Degraded cells have no free bandwidth, only undegraded ones can take a full call as is
    if state.level == 0 and free_bandwidth(state, config) + EPSILON_KBPS >= spec.requested_kbps:
        return AdmissionDecision(accepted=True, plan=replace(state, occupancy=occupancy))

    if available_bandwidth(state, config, p) + EPSILON_KBPS >= min_allocation(spec, p):
        return AdmissionDecision(accepted=True, plan=rebalance(occupancy, config, p))

    return AdmissionDecision(accepted=False, reason=RejectReason.BELOW_FLOOR)


def rebalance(occupancy: tuple[float, ...], config: SystemConfig, p: int) -> CellState:
    """Allocate the cell at profile p with the smallest level that fits."""

    if _floor_demand(occupancy, config, p) > config.capacity_kbps + EPSILON_KBPS:
        raise InfeasibleRebalance(f"occupancy {occupancy} does not fit at profile {p} floors")

    demand = sum(n * c.requested_kbps for n, c in zip(occupancy, config.classes, strict=True))
    level = 0.0
    if demand > config.capacity_kbps + EPSILON_KBPS:
        releasable = sum(n * c.requested_kbps * c.gamma[p] for n, c in zip(occupancy, config.classes, strict=True))
        level = min(1.0, (demand - config.capacity_kbps) / releasable)

    return CellState(
        occupancy=occupancy,
        alloc_kbps=tuple(c.requested_kbps * (1 - level * c.gamma[p]) for c in config.classes),
        profile=p,
        level=level,
    )


def relax(occupancy: tuple[float, ...], config: SystemConfig) -> CellState:
    """Rebalance at the shallowest profile whose floors still fit."""

    for q in reversed(config.priorities):
        if _floor_demand(occupancy, config, q) <= config.capacity_kbps + EPSILON_KBPS:
            return rebalance(occupancy, config, q)
    raise InfeasibleRebalance(f"occupancy {occupancy} does not fit at any profile")


def release_and_relax(state: CellState, config: SystemConfig, m_dep: int) -> CellState:
    """Remove one class m_dep call and hand the freed bandwidth back."""

    _check_class(config, m_dep)
    if state.count(m_dep) < 1:
        raise ContractViolation(f"no class {m_dep} call to release")
    return relax(_bump(state.occupancy, m_dep, -1), config)


def check_invariants(state: CellState, config: SystemConfig) -> list[str]:
    """List every state invariant the given state breaks."""

    violations: list[str] = []
    for spec, n, alloc in zip(config.classes, state.occupancy, state.alloc_kbps, strict=True):
        expected = spec.requested_kbps * (1 - state.level * spec.gamma[state.profile])
        if abs(alloc - expected) > EPSILON_KBPS:
            violations.append(f"{spec.name}: allocation {alloc} does not match level {state.level}")
        if n > 0 and alloc < min_allocation(spec, 0) - EPSILON_KBPS:
            violations.append(f"{spec.name}: allocation {alloc} below its absolute floor")
    if free_bandwidth(state, config) < -EPSILON_KBPS:
        violations.append(f"allocated bandwidth exceeds capacity by {-free_bandwidth(state, config)}")
    demand = sum(n * c.requested_kbps for n, c in zip(state.occupancy, config.classes, strict=True))
    if demand <= config.capacity_kbps and state.level > 0:
        violations.append(f"full demand {demand} fits but level is {state.level}")
    return violations


def _floor_demand(occupancy: Iterable[float], config: SystemConfig, p: int) -> float:
    return sum(n * min_allocation(spec, p) for n, spec in zip(occupancy, config.classes, strict=True))


def _bump(occupancy: tuple[float, ...], m: int, delta: int) -> tuple[float, ...]:
    return tuple(n + delta if i == m - 1 else n for i, n in enumerate(occupancy))


def _check_class(config: SystemConfig, m: int) -> None:
    if not 1 <= m <= config.class_count:
        raise ContractViolation(f"class {m} out of range 1..{config.class_count}")
