"""
Task Labels Module
Task specifications and label derivation for DEC, READ and LOS

Features:
- TaskSpec with ordered label space and task description
- Readmission labelling from encounter-time gaps (inclusive window)
- Length-of-stay binning into 10 intervals
- Decompensation labels passed through from the cohort
"""

import math
from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, model_validator

from config.constants import EngineConstants
from data.records import PatientRecord, Visit
from utils.exceptions import ConfigurationError, InvariantViolation, NotLabelableError

# Absorbs float noise in day arithmetic (e.g. 10.3 - 3.3)
_DAY_TOLERANCE = 1e-9


class TaskSpec(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    kind: str
    label_space: List[str]
    description: str

    @model_validator(mode='after')
    def _label_space_size(self) -> 'TaskSpec':
        if self.kind not in EngineConstants.TASK_LABELS:
            raise ValueError(f"unknown task kind '{self.kind}'")
        expected = 10 if self.kind == 'LOS' else 2
        if len(self.label_space) != expected:
            raise ValueError(f"{self.kind} needs {expected} labels, got {len(self.label_space)}")
        return self


class Label(BaseModel):
    model_config = ConfigDict(extra='forbid', frozen=True)

    kind: str
    value: str
    index: int

    @model_validator(mode='after')
    def _index_matches_value(self) -> 'Label':
        if self.kind not in EngineConstants.TASK_LABELS:
            raise ValueError(f"unknown task kind '{self.kind}'")
        space = EngineConstants.TASK_LABELS[self.kind]
        if not 0 <= self.index < len(space) or space[self.index] != self.value:
            raise ValueError(f"label index {self.index} does not match value '{self.value}'")
        return self


def task_spec(kind: str) -> TaskSpec:
    kind = kind.upper()
    if kind not in EngineConstants.TASK_LABELS:
        raise ConfigurationError(f"Unknown task kind: {kind}",
                                 details={'task': kind, 'known': list(EngineConstants.TASK_LABELS)})
    return TaskSpec(kind=kind, label_space=list(EngineConstants.TASK_LABELS[kind]),
                    description=EngineConstants.TASK_DESCRIPTIONS[kind])


def make_label(kind: str, index: int) -> Label:
    return Label(kind=kind, value=EngineConstants.TASK_LABELS[kind][index], index=index)


def label_of(task: TaskSpec, value: str) -> Label:
    """Label for an exact label-space value."""
    if value not in task.label_space:
        raise InvariantViolation(f"'{value}' is not a {task.kind} label",
                                 details={'task': task.kind, 'value': value})
    return make_label(task.kind, task.label_space.index(value))


def _binary(kind: str, outcome: bool) -> Label:
    return make_label(kind, 1 if outcome else 0)


def label_read(patient: PatientRecord, j: int,
               kappa: float = EngineConstants.READMISSION_WINDOW_DAYS) -> Label:
    """'yes' iff visit j+1 starts at most ``kappa`` days after visit j started."""
    if j < 0 or j + 1 >= len(patient.visits):
        raise NotLabelableError(f"Visit {j + 1} does not exist for patient {patient.patient_id}",
                                details={'patient_id': patient.patient_id, 'visit': j})
    gap = patient.visits[j + 1].encounter_time - patient.visits[j].encounter_time
    return _binary('READ', gap <= kappa + _DAY_TOLERANCE)


def stay_whole_days(visit: Visit) -> int:
    stay = visit.stay_days
    if stay < 0:
        raise InvariantViolation("Negative length of stay",
                                 details={'encounter': visit.encounter_time,
                                          'discharge': visit.discharge_time})
    return math.floor(stay + _DAY_TOLERANCE)


def label_los(visit: Visit) -> Label:
    index = int(np.digitize(stay_whole_days(visit), EngineConstants.LOS_BIN_EDGES))
    return make_label('LOS', index)


def label_dec(visit: Visit) -> Label:
    return _binary('DEC', visit.decompensation)


def gold_label(task: TaskSpec, patient: PatientRecord) -> Label:
    """
    Gold label of the prediction target.

    READ predicts the gap between the last two visits; DEC and LOS describe
    the last visit.
    """
    if task.kind == 'READ':
        return label_read(patient, len(patient.visits) - 2)
    if task.kind == 'LOS':
        return label_los(patient.visits[-1])
    return label_dec(patient.visits[-1])


def observed_visits(task: TaskSpec, patient: PatientRecord) -> List[Visit]:
    """Visits the agent may see; READ withholds the visit whose timing is predicted."""
    if task.kind == 'READ':
        if len(patient.visits) < 2:
            raise NotLabelableError(f"READ needs two visits for patient {patient.patient_id}",
                                    details={'patient_id': patient.patient_id})
        return list(patient.visits[:-1])
    return list(patient.visits)
