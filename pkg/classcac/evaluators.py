"""Evaluate one traffic point with the analytic chain, the exact chain or the simulator."""

from dataclasses import dataclass, field
from enum import StrEnum

import numpy as np

from classcac.cellmodel import chain, oracle, simulator
from classcac.cellmodel.model import HandoverMode
from classcac.cellmodel.policy import releasable_bandwidth
from classcac.cellmodel.statistics import Estimate

from .config import ExperimentConfig, build_sim_config
from .const import KNEE_TOLERANCE


class Mode(StrEnum):
    """Evaluator choice."""

    ANALYTIC = "analytic"
    ORACLE = "oracle"
    SIMULATE = "simulate"


@dataclass(frozen=True)
class TrafficPoint:
    """Offered rates of one experiment point."""

    total_rate: float
    new_rate: float
    handover_rate: float


@dataclass
class MetricsRow:
    """Metrics of one traffic point.

    Probabilities without a sample are None.  Simulated rows carry the standard
    error of every metric in ``std_errors``, keyed like the CSV columns.
    """

    lambda_total: float
    p_drop: float | None
    p_block: tuple[float | None, ...]
    p_forced: float | None
    utilization: float | None
    alloc_kbps: tuple[float | None, ...]
    releasable_kbps: tuple[float | None, ...]
    forced_source: str = ""
    error: str = ""
    std_errors: dict[str, float] = field(default_factory=dict)

    @classmethod
    def failed(cls, lambda_total: float, config: ExperimentConfig, error: str) -> "MetricsRow":
        """Return a row with no metrics and an error code."""
        classes = config.class_count
        return cls(
            lambda_total=lambda_total,
            p_drop=None,
            p_block=(None,) * classes,
            p_forced=None,
            utilization=None,
            alloc_kbps=(None,) * classes,
            releasable_kbps=(None,) * (classes + 1),
            error=error,
        )

    def values(self, config: ExperimentConfig) -> dict[str, float | None]:
        """Return the metrics keyed by CSV column name."""
        names = [c.name for c in config.classes]
        result: dict[str, float | None] = {"lambda_total": self.lambda_total, "p_drop": self.p_drop}
        result.update({f"p_block_{name}": value for name, value in zip(names, self.p_block, strict=True)})
        result["p_forced"] = self.p_forced
        result["utilization"] = self.utilization
        result.update({f"alloc_{name}": value for name, value in zip(names, self.alloc_kbps, strict=True)})
        result.update({f"releasable_p{p}": value for p, value in enumerate(self.releasable_kbps)})
        return result


def metric_columns(config: ExperimentConfig) -> list[str]:
    """Return the fixed CSV metric columns of a configuration."""
    names = [c.name for c in config.classes]
    return [
        "lambda_total",
        "p_drop",
        *(f"p_block_{name}" for name in names),
        "p_forced",
        "utilization",
        *(f"alloc_{name}" for name in names),
        *(f"releasable_p{p}" for p in config.priorities),
    ]


def solve_analytic(
    config: ExperimentConfig, new_rate: float, handover_rate: float
) -> tuple[chain.ChainSpec, chain.StationaryDistribution]:
    """Build and solve the birth-death chain for the given rates."""

    lam = (handover_rate, *(new_rate * c.mix_fraction for c in config.classes))
    mu_i = config.mu_i
    spec = chain.build_chain(
        config.system,
        lam,
        config.service_rate,
        thresholds=config.threshold_override,
        phi=mu_i.phi if mu_i else None,
        table=mu_i.table if mu_i else None,
    )
    return spec, chain.stationary_distribution(spec)


def analytic_drop(config: ExperimentConfig, new_rate: float, handover_rate: float) -> float:
    """Return the analytic handover dropping probability."""
    spec, dist = solve_analytic(config, new_rate, handover_rate)
    return chain.handover_dropping(dist, spec.thresholds)


def resolve_traffic(config: ExperimentConfig, total_rate: float | None = None) -> TrafficPoint:
    """Return the traffic of the configured point, or of a sweep point with total rate lambda_T."""

    handover = config.arrivals.handover

    def _drop(new_rate: float, handover_rate: float) -> float:
        return analytic_drop(config, new_rate, handover_rate)

    if total_rate is None:
        new_rate = config.arrivals.new_rate_total
        if handover.mode == HandoverMode.EXOGENOUS:
            handover_rate = handover.rate or 0.0
        else:
            p_handover = chain.handover_propensity(_dwell(config), config.duration_mean_s)
            handover_rate, _ = chain.handover_rate_fixed_point(new_rate, p_handover, _drop)
        return TrafficPoint(new_rate + handover_rate, new_rate, handover_rate)

    if handover.mode == HandoverMode.EXOGENOUS:
        offered = config.arrivals.new_rate_total + (handover.rate or 0.0)
        share = (handover.rate or 0.0) / offered if offered > 0 else 0.0
        return TrafficPoint(total_rate, total_rate * (1 - share), total_rate * share)

    p_handover = chain.handover_propensity(_dwell(config), config.duration_mean_s)
    new_rate, handover_rate, _ = chain.split_total_rate(total_rate, p_handover, _drop)
    return TrafficPoint(total_rate, new_rate, handover_rate)


def forced_from_drop(config: ExperimentConfig, traffic: TrafficPoint, p_drop: float) -> float | None:
    """Return the formula-based forced-termination probability."""
    if config.dwell_mean_s is not None:
        return chain.forced_termination(p_drop, config.dwell_mean_s, config.duration_mean_s)
    p_handover = chain.implied_handover_propensity(traffic.new_rate, traffic.handover_rate, p_drop)
    return None if p_handover is None else chain.forced_termination_for(p_drop, p_handover)


def evaluate_analytic(config: ExperimentConfig, traffic: TrafficPoint) -> MetricsRow:
    """Evaluate a point with the one-dimensional chain."""

    spec, dist = solve_analytic(config, traffic.new_rate, traffic.handover_rate)
    system = config.system
    levels = spec.thresholds
    p_drop = chain.handover_dropping(dist, levels)

    compositions = [chain.composition_state(i, system) for i in range(levels.top + 1)]
    occupancy = np.array([s.occupancy for s in compositions], dtype=float)
    carried = occupancy * np.array([s.alloc_kbps for s in compositions])
    mean_occupancy = dist.P @ occupancy
    mean_carried = dist.P @ carried
    alloc = tuple(
        float(mean_carried[i] / mean_occupancy[i]) if mean_occupancy[i] > 0 else c.requested_kbps
        for i, c in enumerate(system.classes)
    )
    releasable = tuple(
        float(sum(prob * releasable_bandwidth(s, system, p) for prob, s in zip(dist.P, compositions, strict=True)))
        for p in system.priorities
    )
    return MetricsRow(
        lambda_total=traffic.total_rate,
        p_drop=p_drop,
        p_block=tuple(chain.new_call_blocking(dist, levels, m) for m in range(1, system.class_count + 1)),
        p_forced=forced_from_drop(config, traffic, p_drop),
        utilization=min(1.0, float(mean_carried.sum()) / system.capacity_kbps),
        alloc_kbps=alloc,
        releasable_kbps=releasable,
        forced_source=simulator.ForcedSource.FORMULA,
    )


def evaluate_oracle(config: ExperimentConfig, traffic: TrafficPoint, cap: int = oracle.DEFAULT_STATE_CAP) -> MetricsRow:
    """Evaluate a point exactly; handovers are an exogenous Poisson stream."""

    system = config.system
    space = oracle.enumerate_states(system, oracle.TrafficSplit(traffic.new_rate, traffic.handover_rate), cap)
    generator = oracle.build_generator(space, system, config.duration_mean_s)
    metrics = oracle.exact_metrics(oracle.solve_stationary(generator), space, system)
    return MetricsRow(
        lambda_total=traffic.total_rate,
        p_drop=metrics.p_drop,
        p_block=metrics.blocking[1:],
        p_forced=forced_from_drop(config, traffic, metrics.p_drop),
        utilization=metrics.utilization,
        alloc_kbps=metrics.mean_alloc_kbps,
        releasable_kbps=metrics.mean_releasable_kbps,
        forced_source=simulator.ForcedSource.FORMULA,
    )


def evaluate_simulation(
    config: ExperimentConfig,
    traffic: TrafficPoint,
    *,
    seed: int | None = None,
    replications: int | None = None,
    handover_mode: HandoverMode | None = None,
    verify_invariants: bool = False,
    verbose: bool = False,
) -> MetricsRow:
    """Evaluate a point by simulation; endogenous runs only use the new-call rate."""

    sim_config = build_sim_config(
        config,
        new_rate=traffic.new_rate,
        handover_rate=traffic.handover_rate,
        handover_mode=handover_mode,
        seed=seed,
        replications=replications,
    )
    result = simulator.run(sim_config, verify_invariants=verify_invariants, verbose=verbose)
    row = MetricsRow(
        lambda_total=traffic.total_rate,
        p_drop=result.p_drop.mean,
        p_block=tuple(e.mean for e in result.p_block),
        p_forced=result.p_forced.mean,
        utilization=result.utilization.mean,
        alloc_kbps=tuple(e.mean for e in result.mean_alloc_kbps),
        releasable_kbps=tuple(e.mean for e in result.mean_releasable_kbps),
        forced_source=result.forced_source,
    )
    names = [c.name for c in config.classes]
    estimates: dict[str, Estimate] = {"p_drop": result.p_drop, "p_forced": result.p_forced}
    estimates.update({f"p_block_{n}": e for n, e in zip(names, result.p_block, strict=True)})
    estimates["utilization"] = result.utilization
    estimates.update({f"alloc_{n}": e for n, e in zip(names, result.mean_alloc_kbps, strict=True)})
    estimates.update({f"releasable_p{p}": e for p, e in enumerate(result.mean_releasable_kbps)})
    row.std_errors = {name: e.std_error for name, e in estimates.items()}
    return row


def allocation_knee(rows: list[MetricsRow], index: int, tolerance: float = KNEE_TOLERANCE) -> float | None:
    """Return the last rate before class allocation drops more than tolerance below its starting value."""

    values = [(row.lambda_total, row.alloc_kbps[index]) for row in rows if row.alloc_kbps[index] is not None]
    if not values:
        return None
    reference = values[0][1]
    assert reference is not None
    knee = values[0][0]
    for rate, alloc in values:
        if alloc is None or alloc < reference * (1 - tolerance):
            break
        knee = rate
    return knee


def _dwell(config: ExperimentConfig) -> float:
    # Validated: endogenous documents always carry a dwell time
    assert config.dwell_mean_s is not None
    return config.dwell_mean_s
