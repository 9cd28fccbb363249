"""Replication statistics."""

from collections.abc import Iterable
from dataclasses import dataclass, replace
import math

import numpy as np
from scipy import stats

CONFIDENCE_LEVEL = 0.95
RULE_OF_THREE = 3.0


@dataclass(frozen=True)
class Estimate:
    """Mean over replications with its standard error and confidence half-width.

    ``mean`` is None when no replication produced a sample; fewer than two
    samples give infinite error bounds.
    """

    mean: float | None
    std_error: float
    half_width: float
    samples: int

    def value_or(self, default: float) -> float:
        """Return the mean, or the default when there is no sample."""
        return default if self.mean is None else self.mean


def t_quantile(dof: int, level: float = CONFIDENCE_LEVEL) -> float:
    """Return the two-sided Student-t quantile."""
    return float(stats.t.ppf((1 + level) / 2, dof))


def summarize(values: Iterable[float | None], level: float = CONFIDENCE_LEVEL) -> Estimate:
    """Aggregate per-replication values, skipping replications without a sample."""

    sample = np.array([v for v in values if v is not None], dtype=float)
    if sample.size < 2:
        mean = float(sample[0]) if sample.size else None
        return Estimate(mean=mean, std_error=math.inf, half_width=math.inf, samples=int(sample.size))
    std_error = float(sample.std(ddof=1)) / math.sqrt(sample.size)
    return Estimate(
        mean=float(sample.mean()),
        std_error=std_error,
        half_width=t_quantile(sample.size - 1, level) * std_error,
        samples=int(sample.size),
    )


def floor_proportion(estimate: Estimate, trials: int) -> Estimate:
    """Bound the error of a proportion from below by the rule of three.

    Replications that all count zero events have no spread, yet the proportion
    is only known to lie below 3 / trials.  The standard error never drops
    under 1 / trials, so three standard errors cover that bound.
    """

    if trials <= 0 or estimate.mean is None:
        return estimate
    bound = RULE_OF_THREE / trials
    return replace(
        estimate,
        std_error=max(estimate.std_error, bound / RULE_OF_THREE),
        half_width=max(estimate.half_width, bound),
    )
