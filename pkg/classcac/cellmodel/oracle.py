"""Exact continuous-time Markov chain of the cell under the admission policy.

A state is the occupancy vector plus, while calls are degraded, the profile
that produced the current allocation: admissions keep the arriving call's
profile and departures relax to the shallowest one, so occupancy alone does not
determine allocations.
"""

from collections import deque
from dataclasses import dataclass, field
import logging
import warnings

import numpy as np
import numpy.typing as npt
from scipy import sparse
from scipy.sparse.linalg import spsolve

from .exceptions import NumericalFailure, StateSpaceTooLarge
from .model import SystemConfig
from .policy import (
    EPSILON_KBPS,
    CellState,
    admit,
    release_and_relax,
    releasable_bandwidth,
)

_LOGGER = logging.getLogger(__name__)

DEFAULT_STATE_CAP = 2_000_000
RESIDUAL_TOLERANCE = 1e-10

StateKey = tuple[tuple[float, ...], int | None]


@dataclass(frozen=True)
class TrafficSplit:
    """Poisson arrival rates offered to the cell."""

    new_rate: float
    handover_rate: float

    def rate(self, config: SystemConfig, m: int, p: int) -> float:
        """Return the rate of class m arrivals with priority p."""
        total = self.handover_rate if p == 0 else self.new_rate
        return total * config.spec(m).mix_fraction


@dataclass
class StateSpace:
    """Reachable states in breadth-first order with their transitions."""

    config: SystemConfig
    split: TrafficSplit
    states: list[CellState] = field(default_factory=list)
    index: dict[StateKey, int] = field(default_factory=dict)
    arrivals: list[tuple[int, int, int, int]] = field(default_factory=list)
    """(source, target, class, priority) of every accepted arrival."""
    departures: list[tuple[int, int, int]] = field(default_factory=list)
    """(source, target, class) of every departure."""
    rejected: list[frozenset[tuple[int, int]]] = field(default_factory=list)
    """(class, priority) pairs refused in each state."""

    def __len__(self) -> int:
        """Return the number of states."""
        return len(self.states)

    def add(self, state: CellState) -> tuple[int, bool]:
        """Register a state and return (index, newly added)."""
        key = state.key()
        if key in self.index:
            return self.index[key], False
        self.index[key] = len(self.states)
        self.states.append(state)
        return self.index[key], True


@dataclass(frozen=True)
class GeneratorMatrix:
    """Sparse generator of the exact chain."""

    space: StateSpace
    q: sparse.csr_matrix


@dataclass(frozen=True)
class ExactMetrics:
    """Stationary performance of the exact chain.

    ``blocking[0]`` is the handover dropping probability, ``blocking[m]`` the
    class m new-call blocking probability.
    """

    blocking: tuple[float, ...]
    utilization: float
    mean_alloc_kbps: tuple[float, ...]
    mean_releasable_kbps: tuple[float, ...]
    mean_occupancy: tuple[float, ...]

    @property
    def p_drop(self) -> float:
        """Handover dropping probability."""
        return self.blocking[0]


def count_admissible(config: SystemConfig, cap: int) -> int:
    """Count occupancy vectors fitting at the deepest floors, stopping past cap."""

    floors = [c.min_kbps(0) for c in config.classes]

    def _count(position: int, remaining: float, budget: int) -> int:
        if position == len(floors) - 1:
            return int((remaining + EPSILON_KBPS) // floors[position]) + 1
        total = 0
        n = 0
        while n * floors[position] <= remaining + EPSILON_KBPS and total <= budget:
            total += _count(position + 1, remaining - n * floors[position], budget - total)
            n += 1
        return total

    return _count(0, config.capacity_kbps, cap)


def enumerate_states(config: SystemConfig, split: TrafficSplit, cap: int = DEFAULT_STATE_CAP) -> StateSpace:
    """Explore every state reachable from the empty cell."""

    # Handover arrivals of every class reach every admissible occupancy
    if split.handover_rate > 0 and all(c.mix_fraction > 0 for c in config.classes):
        admissible = count_admissible(config, cap)
        if admissible > cap:
            raise StateSpaceTooLarge(admissible, cap)

    space = StateSpace(config=config, split=split)
    space.add(CellState.empty(config))
    frontier = deque([0])
    while frontier:
        source = frontier.popleft()
        state = space.states[source]
        refused: set[tuple[int, int]] = set()
        for m in range(1, config.class_count + 1):
            for p in (0, m):
                decision = admit(state, config, m, p)
                if not decision.accepted or decision.plan is None:
                    refused.add((m, p))
                elif split.rate(config, m, p) > 0:
                    target, added = space.add(decision.plan)
                    space.arrivals.append((source, target, m, p))
                    if added:
                        frontier.append(target)
            if state.count(m) > 0:
                target, added = space.add(release_and_relax(state, config, m))
                space.departures.append((source, target, m))
                if added:
                    frontier.append(target)
        space.rejected.append(frozenset(refused))
        if len(space) > cap:
            raise StateSpaceTooLarge(len(space), cap)

    _LOGGER.info("Enumerated %s states", len(space))
    return space


def build_generator(space: StateSpace, config: SystemConfig, duration_mean_s: float) -> GeneratorMatrix:
    """Assemble the sparse generator; elastic calls leave faster or slower with their allocation."""

    mu = 1 / duration_mean_s
    rows: list[int] = []
    cols: list[int] = []
    rates: list[float] = []
    for source, target, m, p in space.arrivals:
        rows.append(source)
        cols.append(target)
        rates.append(space.split.rate(config, m, p))
    for source, target, m in space.departures:
        state = space.states[source]
        spec = config.spec(m)
        speed = state.alloc_kbps[m - 1] / spec.requested_kbps if spec.elastic else 1.0
        rows.append(source)
        cols.append(target)
        rates.append(state.count(m) * mu * speed)

    size = len(space)
    off_diagonal = sparse.coo_matrix((rates, (rows, cols)), shape=(size, size)).tocsr()
    outflow = np.asarray(off_diagonal.sum(axis=1)).ravel()
    q = (off_diagonal - sparse.diags(outflow)).tocsr()
    return GeneratorMatrix(space=space, q=q)


def solve_stationary(generator: GeneratorMatrix) -> npt.NDArray[np.float64]:
    """Solve pi Q = 0 with sum(pi) = 1."""

    size = generator.q.shape[0]
    if size == 1:
        return np.ones(1)

    system = generator.q.transpose().tolil()
    system[size - 1, :] = np.ones(size)
    rhs = np.zeros(size)
    rhs[size - 1] = 1.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            pi = spsolve(system.tocsc(), rhs)
        except RuntimeError as err:
            raise NumericalFailure("generator factorization failed") from err

    if not np.all(np.isfinite(pi)):
        raise NumericalFailure("generator is singular")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()

    scale = max(1.0, float(abs(generator.q).max()))
    residual = float(np.abs(generator.q.transpose() @ pi).max())
    if residual > RESIDUAL_TOLERANCE * scale:
        raise NumericalFailure(f"stationary residual {residual:.3e} above tolerance")
    _LOGGER.debug("Solved %s states, residual %.3e", size, residual)
    return pi


def exact_metrics(pi: npt.NDArray[np.float64], space: StateSpace, config: SystemConfig) -> ExactMetrics:
    """Compute blocking (by PASTA), utilization, allocations and releasable bandwidth."""

    classes = range(1, config.class_count + 1)
    occupancy = np.array([s.occupancy for s in space.states], dtype=float)
    carried = occupancy * np.array([s.alloc_kbps for s in space.states])

    def _refused(m: int, p: int) -> float:
        return float(sum(pi[i] for i, refused in enumerate(space.rejected) if (m, p) in refused))

    dropping = sum(config.spec(m).mix_fraction * _refused(m, 0) for m in classes)
    blocking = (dropping, *(_refused(m, m) for m in classes))

    mean_occupancy = pi @ occupancy
    mean_carried = pi @ carried
    mean_alloc = tuple(
        float(mean_carried[m - 1] / mean_occupancy[m - 1]) if mean_occupancy[m - 1] > 0 else spec.requested_kbps
        for m, spec in zip(classes, config.classes, strict=True)
    )
    releasable = tuple(
        float(sum(pi[i] * releasable_bandwidth(s, config, p) for i, s in enumerate(space.states)))
        for p in config.priorities
    )
    utilization = float(mean_carried.sum() / config.capacity_kbps)
    return ExactMetrics(
        blocking=blocking,
        utilization=min(1.0, utilization),
        mean_alloc_kbps=mean_alloc,
        mean_releasable_kbps=releasable,
        mean_occupancy=tuple(float(n) for n in mean_occupancy),
    )
