"""
Reward Calculations Module
Reward components for routing, retrieval relevance, outcome and ranking

Features:
- Token-overlap similarity
- Reasoning-length and meta-path selection rewards
- Retrieval relevance reward for retrieval-routed steps
- Outcome reward from answer correctness and format indicators
- Ranking reward against positive/negative reference trajectories
- Per-step and terminal attribution over an episode
"""

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import structlog

from config.constants import EngineConstants
from data.labels import Label
from knowledge.meta_paths import MetaPathSelection
from utils.exceptions import ConfigurationError

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class RewardConfig:
    expected_length: int = 3
    eta: float = 5.0
    alpha: float = 0.1
    normalization: str = 'none'
    rank_mode: str = 'literal'

    def __post_init__(self):
        if self.expected_length < 1:
            raise ConfigurationError("expected_length must be >= 1")
        if self.eta < 0:
            raise ConfigurationError("eta must be non-negative")
        if self.rank_mode not in EngineConstants.RANK_MODES:
            raise ConfigurationError(f"Unknown rank mode: {self.rank_mode}")
        if self.normalization not in EngineConstants.NORMALIZATION_MODES:
            raise ConfigurationError(f"Unknown normalization: {self.normalization}")

    @classmethod
    def from_section(cls, section) -> 'RewardConfig':
        return cls(expected_length=section.expected_length, eta=section.eta,
                   alpha=section.alpha, normalization=section.normalization,
                   rank_mode=section.rank_mode)


def _tokens(text: str) -> set:
    return set((text or '').lower().split())


def sim(a: str, b: str) -> float:
    """Jaccard similarity of lowercased whitespace token sets; 0 if either is empty."""
    tokens_a, tokens_b = _tokens(a), _tokens(b)
    if not tokens_a or not tokens_b:
        return 0.0
    return len(tokens_a & tokens_b) / len(tokens_a | tokens_b)


def reward_reason(history_len: int, expected_length: int) -> float:
    return 1.0 - abs(history_len / expected_length - 1.0)


def reward_path(selection: Optional[MetaPathSelection]) -> float:
    if selection is None:
        return 0.0
    penalties = EngineConstants.PATH_PENALTIES
    return (len(selection.correct)
            - penalties['erroneous'] * len(selection.erroneous)
            - penalties['repeated'] * len(selection.repeated))


def reward_rel(answer: str, sub_query: str, corpus_text: str) -> float:
    return sim(answer, sub_query) + sim(answer, corpus_text)


def orm_indicators(prediction: Optional[Label], prediction_format_ok: bool,
                   gold: Optional[Label], steps_format_ok: bool) -> tuple:
    correct = int(prediction is not None and gold is not None and prediction.value == gold.value)
    return correct, int(bool(prediction_format_ok)), int(bool(steps_format_ok))


def reward_orm(prediction: Optional[Label], prediction_format_ok: bool,
               gold: Optional[Label], steps_format_ok: bool) -> float:
    return float(sum(orm_indicators(prediction, prediction_format_ok, gold, steps_format_ok)))


@dataclass
class ReferenceTrajectories:
    positives: List[str] = field(default_factory=list)
    negatives: List[str] = field(default_factory=list)


def load_references(path) -> ReferenceTrajectories:
    """JSON Lines of {"polarity": "pos"|"neg", "history": text}."""
    references = ReferenceTrajectories()
    if path is None:
        return references
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"Reference file not found: {path}", details={'path': str(path)})
    for line_no, line in enumerate(path.read_text(encoding='utf-8').splitlines(), start=1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
            polarity, history = entry['polarity'], entry['history']
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            raise ConfigurationError(f"Bad reference entry on line {line_no}",
                                     details={'path': str(path), 'line': line_no}) from exc
        if polarity == 'pos':
            references.positives.append(history)
        elif polarity == 'neg':
            references.negatives.append(history)
        else:
            raise ConfigurationError(f"Unknown polarity '{polarity}' on line {line_no}",
                                     details={'path': str(path), 'line': line_no})
    logger.info('references_loaded', positives=len(references.positives),
                negatives=len(references.negatives))
    return references


def _nearest(history_text: str, candidates: Sequence[str]) -> float:
    return max((sim(history_text, c) for c in candidates), default=0.0)


def reward_rank(history_text: str, references: ReferenceTrajectories, alpha: float,
                mode: str = 'literal') -> float:
    """
    Ranking reward against the most similar positive and negative reference.

    literal: max(alpha, sim_pos - sim_neg), which never drops below alpha.
    margin:  max(0, alpha - (sim_pos - sim_neg)), a hinge on the separation.
    off:     0.
    """
    if mode == 'off':
        return 0.0
    gap = _nearest(history_text, references.positives) - _nearest(history_text, references.negatives)
    if mode == 'margin':
        return max(0.0, alpha - gap)
    return max(alpha, gap)


def reward_all(r_cost: float, r_orm: float, r_rank: float, config: RewardConfig) -> float:
    """Raw composite reward; normalization is applied by the scoring pass."""
    return r_cost + config.eta * r_orm + r_rank


class RewardCalculator:
    """Attributes reward components to the steps of one episode."""

    def __init__(self, config: RewardConfig, references: Optional[ReferenceTrajectories] = None):
        self.config = config
        self.references = references or ReferenceTrajectories()

    def step_components(self, route: str, selection: Optional[MetaPathSelection],
                        answer: str, sub_query: str, corpus_text: str) -> dict:
        """Components earned by a single step, whatever its position."""
        rag = route == 'rag'
        return {
            'r_path': reward_path(selection) if rag else 0.0,
            'r_rel': reward_rel(answer, sub_query, corpus_text) if rag else 0.0,
        }

    def terminal_components(self, history_len: int, history_text: str,
                            prediction: Optional[Label], prediction_format_ok: bool,
                            gold: Optional[Label], steps_format_ok: bool) -> dict:
        correct, answer_format, action_format = orm_indicators(
            prediction, prediction_format_ok, gold, steps_format_ok
        )
        return {
            'r_reason': reward_reason(history_len, self.config.expected_length),
            'r_orm': float(correct + answer_format + action_format),
            'r_rank': reward_rank(history_text, self.references, self.config.alpha,
                                  self.config.rank_mode),
            'answer_correct': correct,
            'answer_format': answer_format,
            'action_format': action_format,
        }

    def compose(self, components: dict) -> dict:
        """Fill r_cost and r_all from the individual components."""
        composed = {'r_reason': 0.0, 'r_path': 0.0, 'r_rel': 0.0, 'r_orm': 0.0, 'r_rank': 0.0,
                    'answer_correct': 0, 'answer_format': 0, 'action_format': 0}
        composed.update(components)
        composed['r_cost'] = composed['r_reason'] + composed['r_path'] + composed['r_rel']
        composed['r_all'] = reward_all(composed['r_cost'], composed['r_orm'],
                                       composed['r_rank'], self.config)
        return composed
