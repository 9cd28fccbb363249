"""One-dimensional birth-death approximation of the adaptive cell.

State i counts calls in the cell.  Up to N calls run undegraded; beyond N only
priorities p whose threshold K[p] is at least i are still admitted, and calls
last longer because elastic traffic is slowed down by degradation.
"""

from collections.abc import Callable, Sequence
from dataclasses import dataclass
import logging
import math

import numpy as np
import numpy.typing as npt

from .exceptions import (
    ConfigInvariantError,
    ContractViolation,
    DegenerateChain,
    InfeasibleRebalance,
    NumericalFailure,
)
from .model import SystemConfig
from .policy import CellState, relax

_LOGGER = logging.getLogger(__name__)

RESCALE_LIMIT = 1e200
THRESHOLD_ROUNDING = 1e-9
FIXED_POINT_MAX_ITERATIONS = 100
FIXED_POINT_TOLERANCE = 1e-9

DropFunction = Callable[[float, float], float]
"""Maps (new-call rate, handover rate) to a handover dropping probability."""


@dataclass(frozen=True)
class ThresholdSet:
    """Hard-QoS state count N and per-priority maximum states K[0..M]."""

    N: int
    K: tuple[int, ...]

    def __post_init__(self):
        """Check N <= K[M] <= ... <= K[0]."""
        if self.N < 0 or not self.K:
            raise ConfigInvariantError(f"invalid thresholds N={self.N} K={list(self.K)}")
        chain = (*self.K, self.N)
        if any(a < b for a, b in zip(chain, chain[1:], strict=False)):
            raise ConfigInvariantError(
                f"thresholds must satisfy N <= K[M] <= ... <= K[0], got N={self.N} K={list(self.K)}"
            )

    @property
    def top(self) -> int:
        """Highest reachable state K[0]."""
        return self.K[0]


@dataclass(frozen=True)
class ChainSpec:
    """Rates of the birth-death chain.

    ``service`` holds the per-call departure rate of every state 0..K[0]; it
    equals ``mu`` up to N.
    """

    lam: tuple[float, ...]
    mu: float
    service: tuple[float, ...]
    thresholds: ThresholdSet

    def __post_init__(self):
        """Check rate shapes and signs."""
        if len(self.lam) != len(self.thresholds.K):
            raise ConfigInvariantError(f"need one arrival rate per priority, got {len(self.lam)}")
        if len(self.service) != self.thresholds.top + 1:
            raise ConfigInvariantError(f"need {self.thresholds.top + 1} service rates, got {len(self.service)}")
        if min(self.lam) < 0 or self.mu < 0 or min(self.service) < 0:
            raise ConfigInvariantError("chain rates must be >= 0")
        if any(rate > self.mu * (1 + 1e-12) for rate in self.service[self.thresholds.N + 1 :]):
            raise ConfigInvariantError("degraded service rates cannot exceed mu")

    @property
    def lambda_total(self) -> float:
        """Total offered rate over all priorities."""
        return sum(self.lam)


@dataclass(frozen=True)
class StationaryDistribution:
    """Stationary probabilities P[0..K[0]]."""

    P: npt.NDArray[np.float64]


def mean_bandwidth(config: SystemConfig, p: int | None = None) -> float:
    """Return the mix-weighted requested bandwidth, or the priority-p floor bandwidth."""
    if p is None:
        return sum(c.mix_fraction * c.requested_kbps for c in config.classes)
    return sum(c.mix_fraction * c.min_kbps(p) for c in config.classes)


def derive_thresholds(config: SystemConfig, explicit_override: ThresholdSet | None = None) -> ThresholdSet:
    """Return the override, or thresholds from mix-weighted mean bandwidths."""

    if explicit_override is not None:
        if len(explicit_override.K) != config.class_count + 1:
            raise ConfigInvariantError(f"thresholds need {config.class_count + 1} K values")
        return explicit_override

    capacity = config.capacity_kbps
    thresholds = ThresholdSet(
        N=math.floor(capacity / mean_bandwidth(config) + THRESHOLD_ROUNDING),
        K=tuple(math.floor(capacity / mean_bandwidth(config, p) + THRESHOLD_ROUNDING) for p in config.priorities),
    )
    _LOGGER.debug("Derived thresholds N=%s K=%s", thresholds.N, thresholds.K)
    return thresholds


def rigid_share(config: SystemConfig) -> float:
    """Return the share of offered bandwidth carried by real-time classes."""
    rigid = sum(c.mix_fraction * c.requested_kbps for c in config.classes if not c.elastic)
    return rigid / mean_bandwidth(config)


def effective_service_rate(
    i: int,
    config: SystemConfig,
    thresholds: ThresholdSet,
    phi: float,
    mu: float,
    table: Sequence[float] | None = None,
) -> float:
    """Return the per-call departure rate in state i.

    Above N the rigid fraction phi keeps its rate while the elastic remainder is
    slowed by the average degradation.  A table with one rate per state
    N+1..K[0] replaces that law.
    """

    if not 1 <= i <= thresholds.top:
        raise ContractViolation(f"state {i} out of range 1..{thresholds.top}")
    if i <= thresholds.N:
        return mu
    if table is not None:
        return table[i - thresholds.N - 1]
    slowdown = min(1.0, config.capacity_kbps / (i * mean_bandwidth(config)))
    return mu * (phi + (1 - phi) * slowdown)


def build_chain(
    config: SystemConfig,
    lam: Sequence[float],
    mu: float,
    *,
    thresholds: ThresholdSet | None = None,
    phi: float | None = None,
    table: Sequence[float] | None = None,
) -> ChainSpec:
    """Assemble the chain for arrival rates lam[0..M] and base service rate mu."""

    levels = derive_thresholds(config, thresholds)
    if table is not None and len(table) != levels.top - levels.N:
        raise ConfigInvariantError(f"mu_i table needs {levels.top - levels.N} entries (states N+1..K[0])")
    blend = rigid_share(config) if phi is None else phi
    service = [mu] + [effective_service_rate(i, config, levels, blend, mu, table) for i in range(1, levels.top + 1)]
    return ChainSpec(lam=tuple(lam), mu=mu, service=tuple(service), thresholds=levels)


def arrival_rate_at(i: int, spec: ChainSpec) -> float:
    """Return the rate of moving into state i from state i - 1."""
    if not 1 <= i <= spec.thresholds.top:
        raise ContractViolation(f"state {i} out of range 1..{spec.thresholds.top}")
    return sum(rate for rate, k in zip(spec.lam, spec.thresholds.K, strict=True) if k >= i)


def stationary_distribution(spec: ChainSpec) -> StationaryDistribution:
    """Solve the chain by its product-form recursion."""

    top = spec.thresholds.top
    weights = np.zeros(top + 1)
    weights[0] = 1.0
    if spec.lambda_total == 0 and spec.mu == 0:
        raise DegenerateChain("all chain rates are zero")

    for i in range(1, top + 1):
        birth = arrival_rate_at(i, spec)
        if birth == 0:
            break
        death = i * spec.service[i]
        if death <= 0:
            raise DegenerateChain(f"state {i} has arrivals but no departures")
        weights[i] = weights[i - 1] * birth / death
        if weights[i] > RESCALE_LIMIT:
            weights[: i + 1] /= weights[i]

    return StationaryDistribution(P=weights / weights.sum())


def balance_residuals(spec: ChainSpec, dist: StationaryDistribution) -> npt.NDArray[np.float64]:
    """Return |inflow - outflow| across every cut i-1 | i."""
    return np.array(
        [
            abs(arrival_rate_at(i, spec) * dist.P[i - 1] - i * spec.service[i] * dist.P[i])
            for i in range(1, spec.thresholds.top + 1)
        ]
    )


def handover_dropping(dist: StationaryDistribution, thresholds: ThresholdSet) -> float:
    """Return the probability that a handover arrival finds the top state."""
    return float(dist.P[thresholds.top])


def new_call_blocking(dist: StationaryDistribution, thresholds: ThresholdSet, m: int) -> float:
    """Return the probability that a class m new call is refused."""
    if not 1 <= m < len(thresholds.K):
        raise ContractViolation(f"class {m} out of range 1..{len(thresholds.K) - 1}")
    return float(dist.P[thresholds.K[m] :].sum())


def erlang_b(servers: int, load: float) -> float:
    """Return the Erlang-B loss probability."""
    blocking = 1.0
    for k in range(1, servers + 1):
        blocking = load * blocking / (k + load * blocking)
    return blocking


def handover_propensity(dwell_mean_s: float, duration_mean_s: float) -> float:
    """Return the probability that a call leaves the cell before it completes."""
    return (1 / dwell_mean_s) / ((1 / dwell_mean_s) + (1 / duration_mean_s))


def forced_termination(p_drop: float, dwell_mean_s: float, duration_mean_s: float) -> float:
    """Return the probability that an admitted call is dropped at some handover."""
    return forced_termination_for(p_drop, handover_propensity(dwell_mean_s, duration_mean_s))


def forced_termination_for(p_drop: float, p_handover: float) -> float:
    """Return the geometric-attempts forced-termination probability."""
    return p_handover * p_drop / (1 - p_handover * (1 - p_drop))


def handover_load_factor(p_handover: float, p_drop: float) -> float:
    """Return the handover attempts generated per admitted new call."""
    return p_handover / (1 - p_handover * (1 - p_drop))


def handover_rate_fixed_point(new_rate: float, p_handover: float, drop_for: DropFunction) -> tuple[float, float]:
    """Return (handover rate, dropping) consistent with a new-call rate."""

    handover_rate = new_rate * p_handover
    for iteration in range(FIXED_POINT_MAX_ITERATIONS):
        p_drop = drop_for(new_rate, handover_rate)
        updated = new_rate * handover_load_factor(p_handover, p_drop)
        if abs(updated - handover_rate) <= FIXED_POINT_TOLERANCE * max(1.0, handover_rate):
            _LOGGER.debug("Handover rate converged to %s after %s iterations", updated, iteration + 1)
            return updated, drop_for(new_rate, updated)
        handover_rate = updated
    raise NumericalFailure(f"handover rate fixed point did not converge for new-call rate {new_rate}")


def split_total_rate(total_rate: float, p_handover: float, drop_for: DropFunction) -> tuple[float, float, float]:
    """Split a total offered rate into (new rate, handover rate, dropping)."""

    p_drop = 0.0
    for iteration in range(FIXED_POINT_MAX_ITERATIONS):
        factor = handover_load_factor(p_handover, p_drop)
        new_rate = total_rate / (1 + factor)
        handover_rate = total_rate - new_rate
        updated = drop_for(new_rate, handover_rate)
        if abs(updated - p_drop) <= FIXED_POINT_TOLERANCE:
            _LOGGER.debug("Rate split of %s converged after %s iterations", total_rate, iteration + 1)
            return new_rate, handover_rate, updated
        p_drop = updated
    raise NumericalFailure(f"rate split did not converge for total rate {total_rate}")


def composition_state(i: int, config: SystemConfig) -> CellState:
    """Return the mean-field cell behind chain state i.

    The i calls are spread over classes by the mix and relaxed to the shallowest
    profile that fits; states past every floor sit at the deepest level.
    """

    occupancy = tuple(i * c.mix_fraction for c in config.classes)
    try:
        return relax(occupancy, config)
    except InfeasibleRebalance:
        _LOGGER.debug("State %s overflows every profile, pinned at the deepest level", i)
    return CellState(
        occupancy=occupancy,
        alloc_kbps=tuple(c.min_kbps(0) for c in config.classes),
        profile=0,
        level=1.0,
    )


def implied_handover_propensity(new_rate: float, handover_rate: float, p_drop: float) -> float | None:
    """Return the handover propensity that generates the given handover rate, if any."""
    offered = new_rate + handover_rate * (1 - p_drop)
    if offered <= 0:
        return None
    return handover_rate / offered
