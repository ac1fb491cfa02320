"""
Evaluation Metrics Module
Accuracy, balanced accuracy and macro F1 for task predictions

Features:
- MetricsReport with confusion matrix over the full label space
- Disease-rarity patient groups (G1 rarest ... G3 most common)
- Per-group metrics
"""

from dataclasses import asdict, dataclass
from typing import Dict, List, Mapping, Sequence

import numpy as np
import pandas as pd
from sklearn.metrics import accuracy_score, balanced_accuracy_score, confusion_matrix, f1_score

from data.labels import Label, TaskSpec
from data.records import PatientRecord
from utils.exceptions import ShapeError

RARITY_GROUPS = ('G1', 'G2', 'G3')


@dataclass
class MetricsReport:
    task: str
    n: int
    accuracy: float
    balanced_accuracy: float
    macro_f1: float
    labels: List[str]
    confusion: List[List[int]]

    def to_dict(self) -> Dict:
        return asdict(self)


def metrics(predictions: Sequence[Label], gold: Sequence[Label], task: TaskSpec) -> MetricsReport:
    """
    Accuracy, balanced accuracy and macro F1.

    Balanced accuracy averages recall over classes present in the gold
    labels. Macro F1 averages over classes present in gold or predictions,
    with 0/0 taken as 0.
    """
    if len(predictions) != len(gold):
        raise ShapeError(f"{len(predictions)} predictions for {len(gold)} gold labels",
                         details={'predictions': len(predictions), 'gold': len(gold)})
    labels = list(task.label_space)
    if not gold:
        return MetricsReport(task=task.kind, n=0, accuracy=0.0, balanced_accuracy=0.0,
                             macro_f1=0.0, labels=labels,
                             confusion=[[0] * len(labels) for _ in labels])

    y_true = [g.value for g in gold]
    y_pred = [p.value for p in predictions]
    present = [label for label in labels if label in set(y_true) | set(y_pred)]

    return MetricsReport(
        task=task.kind,
        n=len(y_true),
        accuracy=float(accuracy_score(y_true, y_pred)),
        balanced_accuracy=float(balanced_accuracy_score(y_true, y_pred)),
        macro_f1=float(f1_score(y_true, y_pred, labels=present, average='macro', zero_division=0)),
        labels=labels,
        confusion=confusion_matrix(y_true, y_pred, labels=labels).tolist()
    )


def rarity_groups(patients: Sequence[PatientRecord]) -> Dict[str, str]:
    """
    Assign each patient to G1/G2/G3 by the percentile of its mean diagnosis prevalence.

    A diagnosis's prevalence is the share of patients carrying it. Percentiles
    in [0, 1/3) form G1 (rarest), [1/3, 2/3) G2 and [2/3, 1] G3.
    """
    if not patients:
        return {}
    codes_per_patient = {
        p.patient_id: sorted({code for visit in p.visits for code in visit.diagnoses})
        for p in patients
    }
    prevalence = pd.Series(
        [code for codes in codes_per_patient.values() for code in codes], dtype=object
    ).value_counts() / len(patients)

    scores = pd.Series({
        pid: float(np.mean([prevalence[c] for c in codes])) if codes else 0.0
        for pid, codes in codes_per_patient.items()
    })
    percentile = (scores.rank(method='min') - 1) / len(scores)
    groups = pd.cut(percentile, bins=[-np.inf, 1 / 3, 2 / 3, np.inf], right=False,
                    labels=list(RARITY_GROUPS))
    return {pid: str(group) for pid, group in groups.items()}


def metrics_by_group(predictions: Sequence[Label], gold: Sequence[Label],
                     patient_ids: Sequence[str], groups: Mapping[str, str],
                     task: TaskSpec) -> Dict[str, MetricsReport]:
    if not len(predictions) == len(gold) == len(patient_ids):
        raise ShapeError("predictions, gold and patient ids differ in length")
    reports = {}
    for group in RARITY_GROUPS:
        members = [i for i, pid in enumerate(patient_ids) if groups.get(pid) == group]
        reports[group] = metrics([predictions[i] for i in members],
                                 [gold[i] for i in members], task)
    return reports
