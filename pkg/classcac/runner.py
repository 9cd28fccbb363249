"""Experiment orchestration: single points, sweeps, cross-validation and replays."""

from dataclasses import dataclass, field
import logging
import math

from classcac.cellmodel.exceptions import StateSpaceTooLarge
from classcac.cellmodel.model import HandoverMode
from classcac.cellmodel.oracle import DEFAULT_STATE_CAP
from classcac.cellmodel.streams import RNG_ALGORITHM

from .config import ExperimentConfig
from .const import ABSOLUTE_SLACK, EXACT_REGIME_BUDGET, STANDARD_ERROR_BUDGET
from .evaluators import (
    MetricsRow,
    Mode,
    TrafficPoint,
    evaluate_analytic,
    evaluate_oracle,
    evaluate_simulation,
    resolve_traffic,
)
from .helpers import RunManifest, build_manifest

_LOGGER = logging.getLogger(__name__)

COMMAND_POINT = "point"
COMMAND_SWEEP = "sweep"


@dataclass(frozen=True)
class Comparison:
    """One metric seen by the three evaluators."""

    metric: str
    analytic: float | None
    oracle: float | None
    simulated: float | None
    std_error: float
    analytic_budget: float | None

    @property
    def simulated_delta(self) -> float | None:
        """Absolute simulator vs exact difference."""
        if self.simulated is None or self.oracle is None:
            return None
        return abs(self.simulated - self.oracle)

    @property
    def analytic_delta(self) -> float | None:
        """Absolute analytic vs exact difference."""
        if self.analytic is None or self.oracle is None:
            return None
        return abs(self.analytic - self.oracle)

    @property
    def simulated_ok(self) -> bool:
        """Whether the simulator lies within the standard-error budget."""
        delta = self.simulated_delta
        return delta is None or delta <= STANDARD_ERROR_BUDGET * self.std_error + ABSOLUTE_SLACK

    @property
    def analytic_ok(self) -> bool:
        """Whether the analytic chain lies within its budget; gaps without a budget are only reported."""
        delta = self.analytic_delta
        return self.analytic_budget is None or delta is None or delta <= self.analytic_budget

    def relative(self, delta: float | None) -> float | None:
        """Return delta relative to the exact value."""
        if delta is None or not self.oracle:
            return None
        return delta / abs(self.oracle)


@dataclass
class ValidationReport:
    """Cross-check of the three evaluators on one configuration."""

    traffic: TrafficPoint
    analytic_budget: float | None
    comparisons: list[Comparison] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        """Whether every comparison stays within its budget."""
        return all(c.simulated_ok and c.analytic_ok for c in self.comparisons)

    def render(self) -> str:
        """Return a plain-text report."""

        budget = "none (approximation gap reported only)"
        if self.analytic_budget is not None:
            budget = f"{self.analytic_budget:g}"
        lines = [
            f"traffic: total={self.traffic.total_rate:.12g} new={self.traffic.new_rate:.12g} "
            f"handover={self.traffic.handover_rate:.12g}",
            f"simulator budget: {STANDARD_ERROR_BUDGET:g} standard errors + {ABSOLUTE_SLACK:g}",
            f"analytic budget: {budget}",
            "metric,analytic,oracle,simulated,std_error,abs_delta_sim,rel_delta_sim,abs_delta_analytic,"
            "rel_delta_analytic,status",
        ]
        for c in self.comparisons:
            status = "ok" if c.simulated_ok and c.analytic_ok else "FAIL"
            cells = [
                c.analytic,
                c.oracle,
                c.simulated,
                c.std_error,
                c.simulated_delta,
                c.relative(c.simulated_delta),
                c.analytic_delta,
                c.relative(c.analytic_delta),
            ]
            lines.append(",".join([c.metric, *(_format(v) for v in cells), status]))
        lines.extend(f"note: {note}" for note in self.notes)
        lines.append(f"result: {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"


class ExperimentRunner:
    """Runs the evaluators of one experiment document."""

    def __init__(
        self,
        config: ExperimentConfig,
        *,
        seed: int | None = None,
        replications: int | None = None,
        cap: int = DEFAULT_STATE_CAP,
        verify_invariants: bool = False,
        verbose: bool = False,
    ):
        """Bind a configuration and its run options."""

        self.config = config
        self.seed = config.sim_settings.seed if seed is None else seed
        self.replications = replications
        self.cap = cap
        self.verify_invariants = verify_invariants
        self.verbose = verbose

    def evaluate(self, mode: Mode, traffic: TrafficPoint, *, handover_mode: HandoverMode | None = None) -> MetricsRow:
        """Evaluate one traffic point with the chosen evaluator."""

        if mode == Mode.ANALYTIC:
            return evaluate_analytic(self.config, traffic)
        if mode == Mode.ORACLE:
            return evaluate_oracle(self.config, traffic, self.cap)
        return evaluate_simulation(
            self.config,
            traffic,
            seed=self.seed,
            replications=self.replications,
            handover_mode=handover_mode,
            verify_invariants=self.verify_invariants,
            verbose=self.verbose,
        )

    def run_point(self, mode: Mode) -> MetricsRow:
        """Evaluate the traffic point written in the document."""
        return self.evaluate(mode, resolve_traffic(self.config))

    def sweep(self, mode: Mode, rates: list[float]) -> list[MetricsRow]:
        """Evaluate every total rate of the grid in ascending order.

        Rows the exact chain cannot handle carry an error code instead of metrics.
        """

        rows = []
        for rate in sorted(rates):
            traffic = resolve_traffic(self.config, rate)
            try:
                rows.append(self.evaluate(mode, traffic))
            except StateSpaceTooLarge as err:
                _LOGGER.warning("Rate %s skipped: %s", rate, err)
                rows.append(MetricsRow.failed(rate, self.config, err.code))
            _LOGGER.info("Rate %s evaluated with %s", rate, mode)
        return rows

    def validate(self) -> ValidationReport:
        """Compare the three evaluators on the document's traffic point.

        The simulator runs with the exogenous handover rate the exact chain uses.
        """

        traffic = resolve_traffic(self.config)
        oracle_row = self.evaluate(Mode.ORACLE, traffic)
        analytic_row = self.evaluate(Mode.ANALYTIC, traffic)
        simulated_row = self.evaluate(Mode.SIMULATE, traffic, handover_mode=HandoverMode.EXOGENOUS)

        budget = EXACT_REGIME_BUDGET if self.exact_regime else None
        report = ValidationReport(traffic=traffic, analytic_budget=budget)
        analytic_values = analytic_row.values(self.config)
        oracle_values = oracle_row.values(self.config)
        simulated_values = simulated_row.values(self.config)
        for metric in self._compared_metrics():
            report.comparisons.append(
                Comparison(
                    metric=metric,
                    analytic=analytic_values[metric],
                    oracle=oracle_values[metric],
                    simulated=simulated_values[metric],
                    std_error=simulated_row.std_errors.get(metric, math.inf),
                    analytic_budget=budget,
                )
            )
        if math.isinf(simulated_row.std_errors.get("utilization", math.inf)):
            report.notes.append("fewer than two replications: simulator bounds are infinite")
        if budget is None:
            report.notes.append("analytic chain is an approximation for this configuration")
        return report

    @property
    def exact_regime(self) -> bool:
        """Whether the one-dimensional chain is exact: a single class that is never degraded."""
        return self.config.class_count == 1 and all(g == 0 for g in self.config.classes[0].gamma)

    def variants(self, mode: Mode) -> dict[str, str]:
        """Return the modelling choices behind a run."""

        mu_i = self.config.mu_i
        if mu_i and mu_i.table is not None:
            law = "table"
        else:
            law = f"phi-blend(phi={mu_i.phi})" if mu_i and mu_i.phi is not None else "phi-blend(rigid share)"
        handover = self.config.handover_mode.value
        if mode == Mode.ORACLE:
            handover = f"exogenous (resolved from {handover})"
        measured = mode == Mode.SIMULATE and self.config.handover_mode == HandoverMode.ENDOGENOUS
        forced = "measured" if measured else "formula"
        return {
            "mu_i_law": law,
            "handover_mode": handover,
            "threshold_source": "explicit" if self.config.thresholds else "derived",
            "forced_termination": forced,
            "rng": RNG_ALGORITHM,
        }

    def manifest(self, mode: Mode, command: str, rates: list[float] | None) -> RunManifest:
        """Describe a run of this runner."""
        return build_manifest(
            self.config,
            mode=mode,
            command=command,
            seed=self.seed if mode == Mode.SIMULATE else None,
            rates=sorted(rates) if rates is not None else None,
            variants=self.variants(mode),
            replications=self.replications,
            cap=self.cap,
        )

    def _compared_metrics(self) -> list[str]:
        names = [c.name for c in self.config.classes]
        return ["p_drop", *(f"p_block_{n}" for n in names), "utilization", *(f"alloc_{n}" for n in names)]


def _format(value: float | None) -> str:
    return "" if value is None else f"{value:.6g}"
