"""Discrete-event simulation of one cell under the admission policy.

Every class keeps a work clock advancing at the speed its calls are served:
elastic calls at alloc / requested, real-time calls at 1.  A call completes
when its class clock reaches the target set at admission, so allocation
changes stretch or shrink elastic calls without rescheduling each of them.

With endogenous handovers, forced termination is measured on the new calls
admitted after warmup.  Calls admitted during warmup are not followed, and a
call still alive at the horizon counts as completed even if a later handover
would have failed, so the measured figure sits slightly low on short runs.
"""

from collections.abc import Generator
from dataclasses import dataclass, field
from enum import StrEnum
import heapq
import itertools
import logging
from typing import Any

import simpy

from .chain import forced_termination_for, handover_propensity, implied_handover_propensity
from .exceptions import ContractViolation, NoSampleError
from .model import HandoverMode, SimConfig, SystemConfig
from .policy import CellState, admit, check_invariants, release_and_relax, releasable_bandwidth
from .statistics import Estimate, floor_proportion, summarize
from .streams import RandomStreams

_LOGGER = logging.getLogger(__name__)

DUE_TOLERANCE = 1e-9

HANDOVER_ARRIVAL_STREAM = "handover_arrival"
HANDOVER_CLASS_STREAM = "handover_class"
WORK_STREAM = "work"
DWELL_STREAM = "dwell"


class ForcedSource(StrEnum):
    """Origin of a forced-termination figure."""

    MEASURED = "measured"
    FORMULA = "formula"


def _arrival_stream(m: int) -> str:
    return f"new_arrival_{m}"


@dataclass(eq=False)
class _Call:
    m: int
    target: float
    counts_forced: bool
    active: bool = True


@dataclass
class _Tally:
    """Counters and time integrals of the measurement window."""

    classes: int
    utilization: float = 0.0
    carried: list[float] = field(default_factory=list)
    occupancy: list[float] = field(default_factory=list)
    releasable: list[float] = field(default_factory=list)
    new_arrivals: list[int] = field(default_factory=list)
    new_blocked: list[int] = field(default_factory=list)
    admitted: list[int] = field(default_factory=list)
    handover_arrivals: int = 0
    handover_blocked: int = 0
    admitted_new: int = 0
    forced: int = 0

    def __post_init__(self):
        """Size per-class and per-priority accumulators."""
        self.carried = [0.0] * self.classes
        self.occupancy = [0.0] * self.classes
        self.releasable = [0.0] * (self.classes + 1)
        self.new_arrivals = [0] * self.classes
        self.new_blocked = [0] * self.classes
        self.admitted = [0] * self.classes

    def integrate(self, state: CellState, system: SystemConfig, span: float) -> None:
        """Accumulate time-weighted quantities of a state held for span seconds."""
        total = 0.0
        for i, (n, alloc) in enumerate(zip(state.occupancy, state.alloc_kbps, strict=True)):
            self.carried[i] += span * n * alloc
            self.occupancy[i] += span * n
            total += n * alloc
        self.utilization += span * total / system.capacity_kbps
        for p in system.priorities:
            self.releasable[p] += span * releasable_bandwidth(state, system, p)

    def count_arrival(self, m: int, p: int, accepted: bool) -> None:
        """Record an arrival outcome."""
        if p == 0:
            self.handover_arrivals += 1
            self.handover_blocked += not accepted
        else:
            self.new_arrivals[m - 1] += 1
            self.new_blocked[m - 1] += not accepted
            self.admitted_new += accepted
        self.admitted[m - 1] += accepted


@dataclass(frozen=True)
class ReplicationResult:
    """Metrics of one replication; None marks a probability without samples."""

    replication_index: int
    p_block: tuple[float | None, ...]
    p_drop: float | None
    p_forced: float | None
    forced_source: ForcedSource
    utilization: float
    mean_alloc_kbps: tuple[float, ...]
    mean_releasable_kbps: tuple[float, ...]
    mean_occupancy: tuple[float, ...]
    carried_rate: tuple[float, ...]
    new_arrivals: tuple[int, ...] = ()
    handover_arrivals: int = 0
    admitted_new: int = 0


@dataclass(frozen=True)
class SimulationResult:
    """Replication metrics aggregated with Student-t confidence intervals."""

    p_block: tuple[Estimate, ...]
    p_drop: Estimate
    p_forced: Estimate
    forced_source: ForcedSource
    utilization: Estimate
    mean_alloc_kbps: tuple[Estimate, ...]
    mean_releasable_kbps: tuple[Estimate, ...]
    mean_occupancy: tuple[Estimate, ...]
    carried_rate: tuple[Estimate, ...]
    replications: tuple[ReplicationResult, ...]


class CellSimulation:
    """One replication of the cell."""

    def __init__(
        self,
        config: SimConfig,
        replication_index: int,
        *,
        verify_invariants: bool = False,
        verbose: bool = False,
    ):
        """Prepare the event loop and the random streams of a replication."""

        if config.warmup_s is None or config.warmup_s >= config.horizon_s:
            raise NoSampleError(f"warmup {config.warmup_s}s leaves no measurement window before {config.horizon_s}s")

        self.config = config
        self.system = config.system
        self.replication_index = replication_index
        self.verify_invariants = verify_invariants
        self.verbose = verbose
        self.warmup = config.warmup_s
        classes = self.system.class_count

        self.streams = RandomStreams(
            config.seed,
            replication_index,
            [_arrival_stream(m) for m in range(1, classes + 1)]
            + [HANDOVER_ARRIVAL_STREAM, HANDOVER_CLASS_STREAM, WORK_STREAM, DWELL_STREAM],
        )
        self.env = simpy.Environment()
        self.state = CellState.empty(self.system)
        self._clock = [0.0] * classes
        self._speed = [1.0] * classes
        self._last = 0.0
        self._pending: list[list[tuple[float, int, _Call]]] = [[] for _ in range(classes)]
        self._sequence = itertools.count()
        self._changed = self.env.event()
        self._tally = _Tally(classes)

    @property
    def endogenous(self) -> bool:
        """Whether handovers come from dwell timers of admitted calls."""
        return self.config.handover_mode == HandoverMode.ENDOGENOUS

    def run(self) -> ReplicationResult:
        """Simulate until the horizon and return the replication metrics."""

        for spec in self.system.classes:
            if self.config.new_rate_total * spec.mix_fraction > 0:
                self.env.process(self._new_calls(spec.index))
        if not self.endogenous and self.config.handover_rate > 0:
            self.env.process(self._handover_calls())
        for m in range(1, self.system.class_count + 1):
            self.env.process(self._drain(m))

        self.env.run(until=self.config.horizon_s)
        self._advance()
        result = self._result()
        _LOGGER.info(
            "Replication %s done: drop=%s block=%s utilization=%.4f",
            self.replication_index,
            result.p_drop,
            result.p_block,
            result.utilization,
        )
        return result

    def _new_calls(self, m: int) -> Generator[Any, Any, None]:
        mean_gap = 1 / (self.config.new_rate_total * self.system.spec(m).mix_fraction)
        while True:
            yield self.env.timeout(self.streams.exponential(_arrival_stream(m), mean_gap))
            self._settle()
            self._arrive(m, m)

    def _handover_calls(self) -> Generator[Any, Any, None]:
        mean_gap = 1 / self.config.handover_rate
        total = sum(c.mix_fraction for c in self.system.classes)
        mix = [c.mix_fraction / total for c in self.system.classes]
        while True:
            yield self.env.timeout(self.streams.exponential(HANDOVER_ARRIVAL_STREAM, mean_gap))
            self._settle()
            self._arrive(1 + self.streams.choice(HANDOVER_CLASS_STREAM, mix), 0)

    def _dwell(self, call: _Call) -> Generator[Any, Any, None]:
        assert self.config.dwell_mean_s is not None
        yield self.env.timeout(self.streams.exponential(DWELL_STREAM, self.config.dwell_mean_s))
        self._settle()
        if not call.active:
            return
        remaining = max(0.0, call.target - self._clock[call.m - 1])
        # The call re-enters as a handover while still holding its old allocation
        accepted = self._arrive(call.m, 0, work=remaining, counts_forced=call.counts_forced)
        call.active = False
        self._apply(release_and_relax(self.state, self.system, call.m))
        if not accepted and call.counts_forced:
            self._tally.forced += 1
            self._verbose_debug("Call of class %s dropped at handover at t=%.3f", call.m, self.env.now)

    def _drain(self, m: int) -> Generator[Any, Any, None]:
        index = m - 1
        while True:
            target = self._peek(index)
            if target is None:
                yield self._changed
                continue
            self._advance()
            delay = max(0.0, (target - self._clock[index]) / self._speed[index])
            yield self.env.timeout(delay) | self._changed
            self._settle()

    def _arrive(self, m: int, p: int, *, work: float | None = None, counts_forced: bool = False) -> bool:
        measured = self.env.now >= self.warmup
        decision = admit(self.state, self.system, m, p)
        if measured:
            self._tally.count_arrival(m, p, decision.accepted)
        if not decision.accepted or decision.plan is None:
            self._verbose_debug("Rejected class %s priority %s at t=%.3f", m, p, self.env.now)
            return False

        if work is None:
            work = self.streams.exponential(WORK_STREAM, self.config.duration_mean_s)
        call = _Call(m=m, target=self._clock[m - 1] + work, counts_forced=counts_forced or (p == m and measured))
        heapq.heappush(self._pending[m - 1], (call.target, next(self._sequence), call))
        self._apply(decision.plan)
        if self.endogenous:
            self.env.process(self._dwell(call))
        return True

    def _settle(self) -> None:
        """Complete every call whose work is done, before anything else happens now."""
        self._advance()
        while (call := self._next_due()) is not None:
            call.active = False
            self._apply(release_and_relax(self.state, self.system, call.m))

    def _next_due(self) -> _Call | None:
        for index, pending in enumerate(self._pending):
            target = self._peek(index)
            if target is not None and target <= self._clock[index] + DUE_TOLERANCE * max(1.0, target):
                return heapq.heappop(pending)[2]
        return None

    def _peek(self, index: int) -> float | None:
        pending = self._pending[index]
        while pending and not pending[0][2].active:
            heapq.heappop(pending)
        return pending[0][0] if pending else None

    def _apply(self, state: CellState) -> None:
        self._advance()
        self.state = state
        self._speed = [
            alloc / spec.requested_kbps if spec.elastic else 1.0
            for alloc, spec in zip(state.alloc_kbps, self.system.classes, strict=True)
        ]
        if self.verify_invariants and (violations := check_invariants(state, self.system)):
            raise ContractViolation(f"t={self.env.now}: {'; '.join(violations)}")
        changed, self._changed = self._changed, self.env.event()
        changed.succeed()

    def _advance(self) -> None:
        now = self.env.now
        span = now - self._last
        if span <= 0:
            return
        for index, speed in enumerate(self._speed):
            self._clock[index] += speed * span
        measured = now - max(self._last, self.warmup)
        if measured > 0:
            self._tally.integrate(self.state, self.system, measured)
        self._last = now

    def _result(self) -> ReplicationResult:
        tally = self._tally
        window = self.config.horizon_s - self.warmup
        p_block = tuple(
            blocked / arrivals if arrivals else None
            for blocked, arrivals in zip(tally.new_blocked, tally.new_arrivals, strict=True)
        )
        p_drop = tally.handover_blocked / tally.handover_arrivals if tally.handover_arrivals else None
        if self.endogenous:
            p_forced = tally.forced / tally.admitted_new if tally.admitted_new else None
            source = ForcedSource.MEASURED
        else:
            p_forced = self._forced_from_formula(p_drop)
            source = ForcedSource.FORMULA
        return ReplicationResult(
            replication_index=self.replication_index,
            p_block=p_block,
            p_drop=p_drop,
            p_forced=p_forced,
            forced_source=source,
            utilization=tally.utilization / window,
            mean_alloc_kbps=tuple(
                carried / occupancy if occupancy > 0 else spec.requested_kbps
                for carried, occupancy, spec in zip(tally.carried, tally.occupancy, self.system.classes, strict=True)
            ),
            mean_releasable_kbps=tuple(value / window for value in tally.releasable),
            mean_occupancy=tuple(value / window for value in tally.occupancy),
            carried_rate=tuple(count / window for count in tally.admitted),
            new_arrivals=tuple(tally.new_arrivals),
            handover_arrivals=tally.handover_arrivals,
            admitted_new=tally.admitted_new,
        )

    def _forced_from_formula(self, p_drop: float | None) -> float | None:
        if p_drop is None:
            return None
        if self.config.dwell_mean_s is not None:
            p_handover: float | None = handover_propensity(self.config.dwell_mean_s, self.config.duration_mean_s)
        else:
            p_handover = implied_handover_propensity(self.config.new_rate_total, self.config.handover_rate, p_drop)
        return None if p_handover is None else forced_termination_for(p_drop, p_handover)

    def _verbose_debug(self, msg: str, *args: Any) -> None:
        if self.verbose:
            _LOGGER.debug(msg, *args)


def run_replication(
    config: SimConfig, replication_index: int, *, verify_invariants: bool = False, verbose: bool = False
) -> ReplicationResult:
    """Run one replication, fully determined by (seed, replication index)."""
    simulation = CellSimulation(config, replication_index, verify_invariants=verify_invariants, verbose=verbose)
    return simulation.run()


def run(config: SimConfig, *, verify_invariants: bool = False, verbose: bool = False) -> SimulationResult:
    """Run every replication and aggregate the metrics."""

    if config.warmup_s is None or config.warmup_s >= config.horizon_s:
        raise NoSampleError(f"warmup {config.warmup_s}s leaves no measurement window before {config.horizon_s}s")

    results = tuple(
        run_replication(config, index, verify_invariants=verify_invariants, verbose=verbose)
        for index in range(config.replications)
    )
    classes = range(config.system.class_count)
    p_forced = summarize(r.p_forced for r in results)
    if results[0].forced_source == ForcedSource.MEASURED:
        p_forced = floor_proportion(p_forced, sum(r.admitted_new for r in results))
    return SimulationResult(
        p_block=tuple(
            floor_proportion(summarize(r.p_block[i] for r in results), sum(r.new_arrivals[i] for r in results))
            for i in classes
        ),
        p_drop=floor_proportion(summarize(r.p_drop for r in results), sum(r.handover_arrivals for r in results)),
        p_forced=p_forced,
        forced_source=results[0].forced_source,
        utilization=summarize(r.utilization for r in results),
        mean_alloc_kbps=tuple(summarize(r.mean_alloc_kbps[i] for r in results) for i in classes),
        mean_releasable_kbps=tuple(
            summarize(r.mean_releasable_kbps[p] for r in results) for p in config.system.priorities
        ),
        mean_occupancy=tuple(summarize(r.mean_occupancy[i] for r in results) for i in classes),
        carried_rate=tuple(summarize(r.carried_rate[i] for r in results) for i in classes),
        replications=results,
    )
