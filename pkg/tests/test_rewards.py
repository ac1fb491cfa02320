import json

import pytest

from calculations.normalization import RewardNormalizer, normalize
from calculations.rewards import (
    ReferenceTrajectories, RewardCalculator, RewardConfig, load_references, reward_all,
    reward_orm, reward_path, reward_rank, reward_reason, reward_rel, sim
)
from data.labels import make_label
from knowledge.meta_paths import MetaPathSelection
from utils.exceptions import ConfigurationError


class TestSimilarity:
    def test_overlap(self):
        assert sim('a b c', 'b c d') == 0.5

    def test_disjoint(self):
        assert sim('a b', 'c d') == 0.0

    def test_empty(self):
        assert sim('', 'a') == 0.0
        assert sim('a', '') == 0.0

    def test_case_insensitive_and_symmetric(self):
        assert sim('Flu Fever', 'fever FLU') == 1.0
        assert sim('a b c', 'c d') == sim('c d', 'a b c')


class TestReasonReward:
    @pytest.mark.parametrize('length, expected', [(3, 1.0), (0, 0.0), (6, 0.0)])
    def test_values(self, length, expected):
        assert reward_reason(length, 3) == pytest.approx(expected)

    def test_overshoot(self):
        assert reward_reason(5, 3) == pytest.approx(1.0 / 3.0)


class TestPathReward:
    @pytest.mark.parametrize('correct, erroneous, repeated, expected', [
        ([0, 1], ['9'], [0], 1.0),
        ([], [], [], 0.0),
        ([0, 1, 2], [], [], 3.0),
    ])
    def test_values(self, correct, erroneous, repeated, expected):
        selection = MetaPathSelection(correct=correct, erroneous=erroneous, repeated=repeated)
        assert reward_path(selection) == expected

    def test_no_selection(self):
        assert reward_path(None) == 0.0


class TestRelevanceReward:
    def test_identical(self):
        assert reward_rel('flu drug', 'flu drug', 'flu drug') == 2.0

    def test_disjoint(self):
        assert reward_rel('a', 'b', 'c') == 0.0

    def test_matches_sub_query_only(self):
        assert reward_rel('kidney failure', 'kidney failure', 'aspirin') == 1.0


class TestOutcomeReward:
    def test_all_good(self):
        yes = make_label('DEC', 1)
        assert reward_orm(yes, True, yes, True) == 3.0

    def test_all_bad(self):
        assert reward_orm(make_label('DEC', 0), False, make_label('DEC', 1), False) == 0.0

    def test_wrong_label_well_formed(self):
        assert reward_orm(make_label('DEC', 0), True, make_label('DEC', 1), True) == 2.0


class TestRankReward:
    @pytest.fixture
    def references(self):
        # sim to positive 0.5, sim to negative 0.2 for history "a b c"
        return ReferenceTrajectories(positives=['b c d'], negatives=['c x y'])

    def test_literal_positive_gap(self, references):
        assert reward_rank('a b c', references, 0.1) == pytest.approx(0.3)

    def test_literal_floors_at_alpha(self):
        references = ReferenceTrajectories(positives=['z'], negatives=['c x y'])
        assert reward_rank('a b c', references, 0.1) == pytest.approx(0.1)

    def test_empty_references(self):
        assert reward_rank('a b c', ReferenceTrajectories(), 0.1) == 0.1

    def test_margin_and_off(self, references):
        assert reward_rank('a b c', references, 0.1, mode='margin') == 0.0
        assert reward_rank('a b c', ReferenceTrajectories(negatives=['c x y']), 0.1,
                           mode='margin') == pytest.approx(0.3)
        assert reward_rank('a b c', references, 0.1, mode='off') == 0.0

    def test_nearest_reference_wins(self):
        references = ReferenceTrajectories(positives=['q r', 'a b c'])
        assert reward_rank('a b c', references, 0.1) == 1.0


class TestComposite:
    def test_direct_sum(self):
        assert reward_all(1.2, 3.0, 0.3, RewardConfig(eta=5.0)) == pytest.approx(16.5)

    def test_zero(self):
        assert reward_all(0.0, 0.0, 0.0, RewardConfig()) == 0.0

    def test_eta_zero_drops_outcome(self):
        assert reward_all(1.2, 3.0, 0.3, RewardConfig(eta=0.0)) == pytest.approx(1.5)

    def test_linear_in_eta(self):
        values = [reward_all(1.0, 2.0, 0.5, RewardConfig(eta=eta)) for eta in (0.0, 1.0, 2.0, 3.0)]
        steps = {round(b - a, 12) for a, b in zip(values, values[1:])}
        assert steps == {2.0}

    def test_invalid_config(self):
        with pytest.raises(ConfigurationError):
            RewardConfig(expected_length=0)
        with pytest.raises(ConfigurationError):
            RewardConfig(rank_mode='hinge')


class TestCalculator:
    def test_llm_step_earns_no_retrieval_rewards(self):
        calculator = RewardCalculator(RewardConfig())
        components = calculator.step_components('llm', None, 'answer', 'question', '')
        assert components == {'r_path': 0.0, 'r_rel': 0.0}

    def test_rag_step(self):
        calculator = RewardCalculator(RewardConfig())
        components = calculator.step_components('rag', MetaPathSelection(correct=[0]),
                                                'flu drug', 'flu drug', 'unrelated')
        assert components == {'r_path': 1.0, 'r_rel': 1.0}

    def test_terminal_and_compose(self):
        calculator = RewardCalculator(RewardConfig(eta=5.0))
        yes = make_label('READ', 1)
        terminal = calculator.terminal_components(3, 'history', yes, True, yes, True)
        assert terminal['r_reason'] == 1.0
        assert terminal['r_orm'] == 3.0
        assert terminal['r_rank'] == 0.1
        composed = calculator.compose(terminal)
        assert composed['r_cost'] == 1.0
        assert composed['r_all'] == pytest.approx(1.0 + 15.0 + 0.1)

    def test_compose_fills_missing_components(self):
        composed = RewardCalculator(RewardConfig()).compose({'r_path': 2.0})
        assert composed['r_cost'] == 2.0
        assert composed['r_orm'] == 0.0


class TestReferences:
    def test_load(self, tmp_path):
        path = tmp_path / 'refs.jsonl'
        path.write_text('\n'.join(json.dumps(e) for e in [
            {'polarity': 'pos', 'history': 'good path'},
            {'polarity': 'neg', 'history': 'bad path'},
        ]), encoding='utf-8')
        references = load_references(path)
        assert references.positives == ['good path']
        assert references.negatives == ['bad path']

    def test_none_path(self):
        assert load_references(None) == ReferenceTrajectories()

    def test_bad_polarity(self, tmp_path):
        path = tmp_path / 'refs.jsonl'
        path.write_text('{"polarity": "maybe", "history": "x"}\n', encoding='utf-8')
        with pytest.raises(ConfigurationError) as info:
            load_references(path)
        assert info.value.details['line'] == 1


class TestNormalization:
    def test_none_is_identity(self):
        assert normalize([3.0, -7.0, 12.5], 'none') == [3.0, -7.0, 12.5]

    def test_clamp(self):
        assert normalize([7.0, -9.0, 2.0], 'clamp') == [5.0, -5.0, 2.0]

    def test_constant_stream_gives_zeros(self):
        assert normalize([4.0] * 6, 'running_zscore') == [0.0] * 6

    def test_running_state(self):
        normalizer = RewardNormalizer('running_zscore')
        normalizer(1.0)
        assert normalizer(3.0) == pytest.approx(1.0)
        assert normalizer.mean == 2.0
        assert normalizer.count == 2

    def test_unknown_mode(self):
        with pytest.raises(ConfigurationError):
            RewardNormalizer('minmax')
