"""
Synthetic Cohort Module
Seeded EHR cohort generation standing in for credentialed ICU datasets

Features:
- Reproducible patients with diagnosis/procedure/medication codes per visit
- Label-correlated marker codes so that non-trivial policies can be scored
- Patient-level train/validation/test split by id hash

Generative rules:
- Each visit carries a decompensation flag drawn with ``dec_prevalence``. A
  flagged visit receives one of the decompensation marker diagnoses with
  probability ``marker_hit``, an unflagged visit with ``marker_miss``.
- Stays are log-normal; stays above 7 days receive a long-stay marker
  procedure with ``marker_hit`` (``marker_miss`` otherwise).
- The next visit is a readmission with ``readmission_rate``; the visit
  before it then receives a readmission marker medication with
  ``marker_hit``. Gold READ labels are recomputed from encounter times.
- Ordinary codes follow a Zipf-like popularity so rarity groups differ.
"""

import hashlib
from typing import Dict, List, Sequence, Tuple

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict, Field, model_validator

from data.labels import gold_label, task_spec
from data.records import CohortEntry, PatientRecord, Visit
from knowledge.synthetic_kg import code_id
from utils.exceptions import ConfigurationError, NotLabelableError

logger = structlog.get_logger(__name__)

MARKER_CODES = 5
SPLIT_NAMES = ('train', 'val', 'test')


class CohortSpec(BaseModel):
    model_config = ConfigDict(extra='forbid')

    seed: int = 0
    n_patients: int = Field(100, ge=0)
    n_diagnoses: int = Field(120, ge=1)
    n_procedures: int = Field(60, ge=1)
    n_medications: int = Field(120, ge=1)
    # visit count = 1 + Poisson(mean_extra_visits), capped at max_visits
    mean_extra_visits: float = Field(1.5, ge=0.0)
    max_visits: int = Field(6, ge=1)
    codes_per_visit: float = Field(2.0, ge=0.0)
    # log-normal stay in days
    stay_log_mean: float = 1.0
    stay_log_sigma: float = Field(0.9, gt=0.0)
    dec_prevalence: float = Field(0.1, ge=0.0, le=1.0)
    readmission_rate: float = Field(0.3, ge=0.0, le=1.0)
    marker_hit: float = Field(0.8, ge=0.0, le=1.0)
    marker_miss: float = Field(0.1, ge=0.0, le=1.0)

    @model_validator(mode='after')
    def _vocab_holds_markers(self) -> 'CohortSpec':
        if min(self.n_diagnoses, self.n_procedures, self.n_medications) < MARKER_CODES:
            raise ValueError(f"code vocabularies need at least {MARKER_CODES} codes")
        return self


def _popularity(size: int) -> np.ndarray:
    weights = 1.0 / np.arange(1, size + 1)
    return weights / weights.sum()


def _draw_codes(rng: np.random.Generator, node_type: str, size: int, mean: float,
                weights: np.ndarray) -> List[str]:
    count = min(size, int(rng.poisson(mean)))
    if count == 0:
        return []
    picks = rng.choice(size, size=count, replace=False, p=weights)
    return [code_id(node_type, int(i)) for i in sorted(picks)]


def _maybe_marker(rng: np.random.Generator, codes: List[str], node_type: str,
                  probability: float) -> List[str]:
    if rng.random() < probability:
        marker = code_id(node_type, int(rng.integers(MARKER_CODES)))
        if marker not in codes:
            codes = sorted(codes + [marker])
    return codes


def _patient(rng: np.random.Generator, spec: CohortSpec, ordinal: int,
             popularity: Dict[str, np.ndarray]) -> PatientRecord:
    n_visits = min(spec.max_visits, 1 + int(rng.poisson(spec.mean_extra_visits)))
    readmit = [bool(rng.random() < spec.readmission_rate) for _ in range(n_visits)]

    visits = []
    encounter = float(rng.integers(0, 365))
    for j in range(n_visits):
        stay = float(rng.lognormal(spec.stay_log_mean, spec.stay_log_sigma))
        flagged = bool(rng.random() < spec.dec_prevalence)

        diagnoses = _draw_codes(rng, 'disease', spec.n_diagnoses, spec.codes_per_visit,
                                popularity['disease'])
        procedures = _draw_codes(rng, 'procedure', spec.n_procedures, spec.codes_per_visit / 2,
                                 popularity['procedure'])
        medications = _draw_codes(rng, 'drug', spec.n_medications, spec.codes_per_visit,
                                  popularity['drug'])

        diagnoses = _maybe_marker(rng, diagnoses, 'disease',
                                  spec.marker_hit if flagged else spec.marker_miss)
        procedures = _maybe_marker(rng, procedures, 'procedure',
                                   spec.marker_hit if stay >= 8 else spec.marker_miss)
        next_is_readmission = j + 1 < n_visits and readmit[j + 1]
        medications = _maybe_marker(rng, medications, 'drug',
                                    spec.marker_hit if next_is_readmission else spec.marker_miss)

        discharge = encounter + stay
        visits.append(Visit(
            encounter_time=round(encounter, 2),
            discharge_time=round(discharge, 2),
            diagnoses=diagnoses,
            procedures=procedures,
            medications=medications,
            decompensation=flagged
        ))
        if next_is_readmission:
            gap = float(rng.uniform(1.0, 15.0))
        else:
            gap = float(rng.uniform(16.0, 120.0))
        encounter = max(encounter + gap, discharge + 0.5)

    return PatientRecord(patient_id=f"P{spec.seed:03d}-{ordinal:06d}", visits=visits)


def _gold(patient: PatientRecord) -> Dict[str, str]:
    gold = {}
    for kind in ('DEC', 'READ', 'LOS'):
        try:
            gold[kind] = gold_label(task_spec(kind), patient).value
        except NotLabelableError:
            gold[kind] = None
    return gold


def gen_synthetic_cohort(spec: CohortSpec) -> List[CohortEntry]:
    """Generate ``spec.n_patients`` patients with gold labels; pure in ``spec``."""
    rng = np.random.default_rng(spec.seed)
    popularity = {
        'disease': _popularity(spec.n_diagnoses),
        'procedure': _popularity(spec.n_procedures),
        'drug': _popularity(spec.n_medications)
    }
    entries = []
    for ordinal in range(spec.n_patients):
        patient = _patient(rng, spec, ordinal, popularity)
        entries.append(CohortEntry(patient=patient, gold=_gold(patient)))
    logger.info('cohort_generated', seed=spec.seed, patients=len(entries))
    return entries


def _hash_fraction(patient_id: str) -> float:
    digest = hashlib.sha256(patient_id.encode('utf-8')).hexdigest()
    return int(digest[:8], 16) / float(1 << 32)


def split_cohort(entries: Sequence[CohortEntry],
                 ratios: Tuple[float, float, float] = (0.6, 0.2, 0.2)) -> Dict[str, List[CohortEntry]]:
    """Patient-level split by id hash; a patient always lands in the same part."""
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigurationError("Split ratios must be three non-negative numbers summing to 1",
                                 details={'ratios': list(ratios)})
    bounds = np.cumsum(ratios)
    parts: Dict[str, List[CohortEntry]] = {name: [] for name in SPLIT_NAMES}
    for entry in entries:
        slot = int(np.searchsorted(bounds, _hash_fraction(entry.patient.patient_id), side='right'))
        parts[SPLIT_NAMES[min(slot, 2)]].append(entry)
    return parts
