"""Constants for ClassCac."""

SHIPPED_CONFIGS = ("table1.json", "baseline_adaptive.json", "baseline_rigid.json", "desk_adaptive.json")

DEFAULT_SEED = 1
DEFAULT_REPLICATIONS = 10
DEFAULT_HORIZON_S = 20_000.0

STANDARD_ERROR_BUDGET = 3.0
"""Simulator vs exact chain tolerance, in standard errors."""
ABSOLUTE_SLACK = 1e-9
EXACT_REGIME_BUDGET = 1e-9
"""Analytic vs exact chain tolerance when the one-dimensional chain is exact."""

KNEE_TOLERANCE = 0.01

EXIT_OK = 0
EXIT_CONFIG_ERROR = 2
EXIT_NUMERICAL_FAILURE = 3
EXIT_VALIDATION_FAILURE = 4
EXIT_CAP_EXCEEDED = 5

CSV_FLOAT_FORMAT = "%.12g"
MANIFEST_SUFFIX = ".manifest.json"
