import json
import logging
import os
from pathlib import Path

from pydantic import BaseModel, parse_obj_as

from classcac.cellmodel.model import SystemConfig

_LOGGER = logging.getLogger(__name__)

CASES_PATH = Path(os.path.abspath(__file__)).parent / "cases"


class ArrivalRequest(BaseModel):
    m: int
    p: int


class GivenCell(BaseModel):
    system: SystemConfig
    occupancy: tuple[int, ...]
    arrival: ArrivalRequest


class AdmissionOutcome(BaseModel):
    accepted: bool
    reason: str | None
    profile: int | None
    level: float | None
    alloc_kbps: tuple[float, ...] | None
    free_kbps: float | None


class AdmissionExpectation(BaseModel):
    name: str
    given: GivenCell
    then: AdmissionOutcome


def _load_expectations() -> list[tuple[str, AdmissionExpectation]]:
    result = []
    for filename in sorted(CASES_PATH.glob("*.json")):
        with open(filename, encoding="utf-8") as f:
            obj = json.load(f)
            try:
                expectations = parse_obj_as(list[AdmissionExpectation], obj)
            except Exception:
                _LOGGER.exception("Failed to load case file %s", filename)
                raise
            result.extend([(f"{filename.stem}:{e.name}", e) for e in expectations])
    return result


def pytest_generate_tests(metafunc):
    if "case" in metafunc.fixturenames and "admission_expectation" in metafunc.fixturenames:
        metafunc.parametrize("case,admission_expectation", _load_expectations())
