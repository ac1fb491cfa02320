import pytest

from conftest import make_patient, make_visit
from data.cohort import CohortSpec, gen_synthetic_cohort, split_cohort
from data.labels import (
    gold_label, label_dec, label_los, label_of, label_read, observed_visits, task_spec
)
from data.records import PatientRecord, read_cohort, write_cohort
from utils.exceptions import ConfigurationError, InvariantViolation, NotLabelableError


class TestReadmission:
    @pytest.mark.parametrize('gap, expected', [(14, 'yes'), (15, 'yes'), (16, 'no')])
    def test_window_is_inclusive(self, gap, expected):
        patient = make_patient(encounters=(0.0, float(gap)))
        assert label_read(patient, 0).value == expected

    def test_fractional_days(self):
        patient = make_patient(encounters=(3.3, 18.3))
        assert label_read(patient, 0).value == 'yes'

    def test_last_visit_is_not_labelable(self):
        patient = make_patient(encounters=(0.0, 5.0))
        with pytest.raises(NotLabelableError):
            label_read(patient, 1)

    def test_gold_uses_last_two_visits(self):
        patient = make_patient(encounters=(0.0, 40.0, 50.0))
        assert gold_label(task_spec('READ'), patient).value == 'yes'

    def test_observed_visits_withhold_target(self):
        patient = make_patient(encounters=(0.0, 40.0, 50.0))
        assert len(observed_visits(task_spec('READ'), patient)) == 2
        assert len(observed_visits(task_spec('DEC'), patient)) == 3
        with pytest.raises(NotLabelableError):
            observed_visits(task_spec('READ'), make_patient())


class TestLengthOfStay:
    @pytest.mark.parametrize('stay, index', [
        (0.5, 0), (1.0, 1), (7.0, 7), (8.0, 8), (14.0, 8), (15.0, 9), (40.0, 9)
    ])
    def test_bins(self, stay, index):
        label = label_los(make_visit(10.0, stay))
        assert label.index == index
        assert label.value == task_spec('LOS').label_space[index]

    def test_float_noise_does_not_drop_a_day(self):
        assert label_los(make_visit(3.3, 7.0)).index == 7

    def test_stay_days(self):
        visit = make_visit(2.0, 7.5)
        assert visit.stay_days == pytest.approx(7.5)
        assert label_los(visit).index == 7


class TestDecompensation:
    def test_flag_passthrough(self):
        assert label_dec(make_visit(0.0, decompensation=True)).value == 'yes'
        assert label_dec(make_visit(0.0)).value == 'no'


class TestTaskSpec:
    def test_label_spaces(self):
        assert task_spec('dec').label_space == ['no', 'yes']
        assert len(task_spec('LOS').label_space) == 10

    def test_unknown_task(self):
        with pytest.raises(ConfigurationError):
            task_spec('MORTALITY')

    def test_label_of_rejects_foreign_value(self):
        assert label_of(task_spec('READ'), 'yes').index == 1
        with pytest.raises(InvariantViolation):
            label_of(task_spec('READ'), 'maybe')


class TestRecords:
    def test_visits_must_be_chronological(self):
        with pytest.raises(ValueError):
            PatientRecord(patient_id='P1', visits=[make_visit(5.0), make_visit(1.0)])

    def test_discharge_before_encounter(self):
        with pytest.raises(ValueError):
            make_visit(5.0, -1.0)

    def test_cohort_file_round_trip(self, tmp_path):
        entries = gen_synthetic_cohort(CohortSpec(seed=2, n_patients=5))
        write_cohort(entries, tmp_path / 'c.jsonl')
        assert read_cohort(tmp_path / 'c.jsonl') == entries

    def test_missing_cohort_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            read_cohort(tmp_path / 'absent.jsonl')

    def test_invalid_line_named(self, tmp_path):
        path = tmp_path / 'bad.jsonl'
        path.write_text('{"patient": {"patient_id": "P1", "visits": []}}\n', encoding='utf-8')
        with pytest.raises(InvariantViolation) as info:
            read_cohort(path)
        assert info.value.details['line'] == 1


class TestSyntheticCohort:
    def test_seeded(self):
        spec = CohortSpec(seed=9, n_patients=20)
        assert gen_synthetic_cohort(spec) == gen_synthetic_cohort(spec)
        assert gen_synthetic_cohort(spec) != gen_synthetic_cohort(CohortSpec(seed=10, n_patients=20))

    def test_zero_patients(self):
        assert gen_synthetic_cohort(CohortSpec(n_patients=0)) == []

    def test_gold_labels_agree_with_derivation(self):
        for entry in gen_synthetic_cohort(CohortSpec(seed=4, n_patients=200)):
            for kind in ('DEC', 'LOS'):
                assert entry.gold[kind] == gold_label(task_spec(kind), entry.patient).value
            if len(entry.patient.visits) < 2:
                assert entry.gold['READ'] is None
            else:
                assert entry.gold['READ'] == gold_label(task_spec('READ'), entry.patient).value

    def test_decompensation_prevalence(self):
        entries = gen_synthetic_cohort(CohortSpec(seed=1, n_patients=2000, dec_prevalence=0.1))
        rate = sum(entry.gold['DEC'] == 'yes' for entry in entries) / len(entries)
        assert 0.07 <= rate <= 0.13

    def test_both_readmission_labels_occur(self):
        entries = gen_synthetic_cohort(CohortSpec(seed=1, n_patients=300))
        values = {entry.gold['READ'] for entry in entries}
        assert {'yes', 'no'} <= values

    def test_small_vocabulary_rejected(self):
        with pytest.raises(ValueError):
            CohortSpec(n_procedures=3)


class TestSplit:
    def test_partition_is_complete_and_disjoint(self):
        entries = gen_synthetic_cohort(CohortSpec(seed=5, n_patients=300))
        parts = split_cohort(entries)
        ids = [e.patient.patient_id for part in parts.values() for e in part]
        assert sorted(ids) == sorted(e.patient.patient_id for e in entries)
        assert 120 <= len(parts['train']) <= 240

    def test_assignment_depends_only_on_patient(self):
        entries = gen_synthetic_cohort(CohortSpec(seed=5, n_patients=50))
        full = split_cohort(entries)
        half = split_cohort(entries[:25])
        for name in full:
            assert {e.patient.patient_id for e in half[name]} <= {e.patient.patient_id for e in full[name]}

    def test_bad_ratios(self):
        with pytest.raises(ConfigurationError):
            split_cohort([], (0.5, 0.5, 0.5))
