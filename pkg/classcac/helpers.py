"""Helpers for rate grids, configuration digests, CSV files and run manifests."""

from datetime import UTC, datetime
import hashlib
import io
import json
import logging
import math
from pathlib import Path
from typing import Any

import pandas as pd
from pydantic import BaseModel, ValidationError

from classcac import __version__
from classcac.cellmodel.exceptions import ConfigFileMissing, ConfigSchemaError

from .config import ExperimentConfig
from .const import CSV_FLOAT_FORMAT, MANIFEST_SUFFIX
from .evaluators import MetricsRow, Mode, metric_columns

_LOGGER = logging.getLogger(__name__)

RATE_DIGITS = 12


class RunManifest(BaseModel):
    """Side file describing how a CSV file was produced."""

    tool_version: str
    config_digest: str
    seed: int | None
    replications: int | None = None
    cap: int | None = None
    mode: Mode
    command: str
    timestamp: str
    variants: dict[str, str]
    rates: list[float] | None
    config: dict[str, Any]


def parse_rates(text: str) -> list[float]:
    """Parse 'start:stop:step' (stop included) or a comma separated list of rates."""

    try:
        if ":" in text:
            start, stop, step = (float(part) for part in text.split(":"))
            if step <= 0 or stop < start:
                raise ConfigSchemaError(f"invalid rate range {text!r}")
            count = math.floor((stop - start) / step + 1e-9) + 1
            rates = [round(start + k * step, RATE_DIGITS) for k in range(count)]
        else:
            rates = [float(part) for part in text.split(",") if part.strip()]
    except ValueError as err:
        raise ConfigSchemaError(f"invalid rate grid {text!r}") from err

    if not rates or any(rate < 0 or not math.isfinite(rate) for rate in rates):
        raise ConfigSchemaError(f"rate grid {text!r} needs at least one finite rate >= 0")
    return sorted(rates)


def config_digest(config: ExperimentConfig) -> str:
    """Return a digest independent of key order and formatting."""
    canonical = json.dumps(json.loads(config.json()), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def rows_to_frame(rows: list[MetricsRow], config: ExperimentConfig) -> pd.DataFrame:
    """Tabulate rows with the fixed column order, sorted by total rate."""

    columns = metric_columns(config)
    records = []
    for row in sorted(rows, key=lambda r: r.lambda_total):
        values = row.values(config)
        if not row.error:
            # No arrivals means nothing was blocked
            values = {name: 0.0 if value is None else value for name, value in values.items()}
        records.append({**values, "error": row.error})
    return pd.DataFrame.from_records(records, columns=[*columns, "error"])


def render_csv(rows: list[MetricsRow], config: ExperimentConfig) -> str:
    """Return the CSV text of the rows."""
    buffer = io.StringIO()
    rows_to_frame(rows, config).to_csv(buffer, index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n")
    return buffer.getvalue()


def write_csv(rows: list[MetricsRow], config: ExperimentConfig, path: Path) -> None:
    """Write the rows as CSV."""
    path.write_text(render_csv(rows, config), encoding="utf-8", newline="\n")
    _LOGGER.info("Wrote %s rows to %s", len(rows), path)


def manifest_path(csv_path: Path) -> Path:
    """Return the manifest location paired with a CSV file."""
    return csv_path.with_name(csv_path.name + MANIFEST_SUFFIX)


def build_manifest(
    config: ExperimentConfig,
    *,
    mode: Mode,
    command: str,
    seed: int | None,
    rates: list[float] | None,
    variants: dict[str, str],
    replications: int | None = None,
    cap: int | None = None,
) -> RunManifest:
    """Describe a run so that it can be reproduced."""
    return RunManifest(
        tool_version=__version__,
        config_digest=config_digest(config),
        seed=seed,
        replications=replications,
        cap=cap,
        mode=mode,
        command=command,
        timestamp=datetime.now(tz=UTC).isoformat(),
        variants=variants,
        rates=rates,
        config=json.loads(config.json(exclude_none=True)),
    )


def write_manifest(manifest: RunManifest, csv_path: Path) -> Path:
    """Write the manifest next to its CSV file."""
    path = manifest_path(csv_path)
    path.write_text(manifest.json(indent=2, sort_keys=True) + "\n", encoding="utf-8", newline="\n")
    return path


def read_manifest(path: Path) -> RunManifest:
    """Load a run manifest."""
    if not path.is_file():
        raise ConfigFileMissing(f"manifest {path} not found")
    try:
        return RunManifest.parse_file(path)
    except (ValidationError, ValueError) as err:
        raise ConfigSchemaError(f"{path}: invalid manifest: {err}") from err
