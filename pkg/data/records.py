"""
Patient Records Module
Longitudinal EHR records and cohort file IO

Features:
- Visit / PatientRecord models with chronological ordering checks
- Cohort JSON Lines files: one patient plus gold labels per line
"""

from pathlib import Path
from typing import Dict, Iterable, List, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from utils.exceptions import ConfigurationError, InvariantViolation
from utils.helpers import iter_jsonl


class Visit(BaseModel):
    """One encounter; times are in days since an arbitrary epoch."""

    model_config = ConfigDict(extra='forbid', frozen=True)

    encounter_time: float
    discharge_time: float
    diagnoses: List[str] = Field(default_factory=list)
    procedures: List[str] = Field(default_factory=list)
    medications: List[str] = Field(default_factory=list)
    decompensation: bool = False

    @model_validator(mode='after')
    def _discharge_after_encounter(self) -> 'Visit':
        if self.discharge_time < self.encounter_time:
            raise ValueError("discharge_time must not precede encounter_time")
        return self

    @property
    def stay_days(self) -> float:
        return self.discharge_time - self.encounter_time


class PatientRecord(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    patient_id: str = Field(min_length=1)
    visits: List[Visit] = Field(min_length=1)

    @model_validator(mode='after')
    def _chronological(self) -> 'PatientRecord':
        times = [visit.encounter_time for visit in self.visits]
        if times != sorted(times):
            raise ValueError("visits must be ordered by encounter_time")
        return self


class CohortEntry(BaseModel):
    """A patient with the gold labels planted or derived for each task."""

    model_config = ConfigDict(extra='forbid')

    patient: PatientRecord
    gold: Dict[str, Optional[str]] = Field(default_factory=dict)


def parse_patient(data: dict) -> PatientRecord:
    try:
        return PatientRecord.model_validate(data)
    except ValidationError as exc:
        raise InvariantViolation("Invalid patient record",
                                 details={'errors': _field_errors(exc)}) from exc


def _field_errors(exc: ValidationError) -> Dict[str, str]:
    return {'.'.join(str(p) for p in err['loc']): err['msg'] for err in exc.errors()}


def write_cohort(entries: Iterable[CohortEntry], path: Path) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, 'w', encoding='utf-8') as handle:
        for entry in entries:
            handle.write(entry.model_dump_json() + '\n')
            count += 1
    return count


def read_cohort(path: Path) -> List[CohortEntry]:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"Cohort file not found: {path}", details={'path': str(path)})
    entries = []
    for line_no, line in enumerate(iter_jsonl(path), start=1):
        try:
            entries.append(CohortEntry.model_validate_json(line))
        except ValidationError as exc:
            raise InvariantViolation(f"Invalid cohort entry on line {line_no}",
                                     details={'line': line_no, 'errors': _field_errors(exc)}) from exc
    return entries
