"""
Episode State Module
MDP state, actions and the persisted trajectory record

Features:
- FIFO sub-query queue and append-only reasoning history
- Top-level and low-level agent states
- Trajectory / StepRecord models with stable JSON key order
"""

from collections import deque
from dataclasses import dataclass, field
from typing import Any, Deque, Dict, Iterator, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator

from data.labels import Label, TaskSpec
from knowledge.meta_paths import MetaPathSelection
from retrieval.subgraph_retriever import RetrievedCorpus

QUERY_ORIGINS = ('initial', 'rewrite', 'deepening')


class _Record(BaseModel):
    model_config = ConfigDict(extra='forbid')


class Query(_Record):
    text: str = Field(min_length=1)
    origin: str

    @field_validator('origin')
    @classmethod
    def _known_origin(cls, value: str) -> str:
        if value not in QUERY_ORIGINS:
            raise ValueError(f"origin must be one of {QUERY_ORIGINS}")
        return value


class QueryQueue:
    """Strict FIFO of pending sub-queries"""

    def __init__(self, items: Optional[List[Query]] = None):
        self._items: Deque[Query] = deque(items or [])

    def enqueue(self, query: Query) -> None:
        self._items.append(query)

    def dequeue(self) -> Query:
        return self._items.popleft()

    def __len__(self) -> int:
        return len(self._items)

    def __iter__(self) -> Iterator[Query]:
        return iter(self._items)

    @property
    def items(self) -> List[Query]:
        return list(self._items)


class HistoryEntry(_Record):
    sub_query: str
    answer: str
    route: str


class ReasoningHistory:
    """Append-only list of (sub-query, intermediate answer, route)"""

    def __init__(self):
        self._entries: List[HistoryEntry] = []

    def append(self, sub_query: str, answer: str, route: str) -> None:
        self._entries.append(HistoryEntry(sub_query=sub_query, answer=answer, route=route))

    @property
    def entries(self) -> List[HistoryEntry]:
        return list(self._entries)

    def __len__(self) -> int:
        return len(self._entries)

    def render(self) -> str:
        return '\n'.join(
            f"Step {i} [{entry.route}] Q: {entry.sub_query}\nA: {entry.answer}"
            for i, entry in enumerate(self._entries, start=1)
        )


@dataclass(frozen=True)
class TopState:
    query: Query
    history: ReasoningHistory


@dataclass(frozen=True)
class LowState:
    query: Query
    history: ReasoningHistory
    selection: MetaPathSelection
    corpus: RetrievedCorpus = field(default_factory=RetrievedCorpus)


class TopAction(_Record):
    route: str
    control: str
    malformed: bool = False
    forced: bool = False


class LLMCall(_Record):
    tag: str
    prompt: str
    response: str
    log_prob: Optional[float] = None
    ref_log_prob: Optional[float] = None
    value: Optional[float] = None


class SelectionRecord(_Record):
    correct: List[int] = Field(default_factory=list)
    erroneous: List[str] = Field(default_factory=list)
    repeated: List[int] = Field(default_factory=list)

    @classmethod
    def of(cls, selection: MetaPathSelection) -> 'SelectionRecord':
        return cls(correct=list(selection.correct), erroneous=list(selection.erroneous),
                   repeated=list(selection.repeated))

    def to_selection(self) -> MetaPathSelection:
        return MetaPathSelection(correct=list(self.correct), erroneous=list(self.erroneous),
                                 repeated=list(self.repeated))


class ProvenanceRecord(_Record):
    meta_path: int
    key: str
    score: float
    kind: str


class RewardBreakdown(_Record):
    r_reason: float = 0.0
    r_path: float = 0.0
    r_rel: float = 0.0
    r_cost: float = 0.0
    r_orm: float = 0.0
    r_rank: float = 0.0
    r_all: float = 0.0
    answer_correct: int = 0
    answer_format: int = 0
    action_format: int = 0


class StepRecord(_Record):
    iteration: int
    query: Query
    top_action: TopAction
    selection: Optional[SelectionRecord] = None
    provenance: List[ProvenanceRecord] = Field(default_factory=list)
    corpus_text: str = ''
    intermediate_answer: str = ''
    action_log_prob: Optional[float] = None
    ref_log_prob: Optional[float] = None
    value_estimate: Optional[float] = None
    reward_breakdown: RewardBreakdown = Field(default_factory=RewardBreakdown)
    llm_calls: List[LLMCall] = Field(default_factory=list)


class Trajectory(_Record):
    episode_id: str
    status: str = 'completed'
    error: Optional[str] = None
    error_code: Optional[str] = None
    task: TaskSpec
    patient_id: str
    seed: int
    config: Dict[str, Any]
    initial_query: str
    rewrites: List[str] = Field(default_factory=list)
    episode_calls: List[LLMCall] = Field(default_factory=list)
    steps: List[StepRecord] = Field(default_factory=list)
    final_response: str = ''
    final_prediction: Optional[Label] = None
    answer_format: bool = False
    gold: Optional[Label] = None

    @field_validator('status')
    @classmethod
    def _known_status(cls, value: str) -> str:
        if value not in ('completed', 'failed'):
            raise ValueError("status must be 'completed' or 'failed'")
        return value

    def to_line(self) -> str:
        return self.model_dump_json()

    @classmethod
    def from_line(cls, line: str) -> 'Trajectory':
        return cls.model_validate_json(line)

    def result(self) -> Dict[str, Any]:
        """Summary returned to service clients."""
        terminal = self.steps[-1].reward_breakdown.model_dump() if self.steps else None
        return {
            'episode_id': self.episode_id,
            'status': self.status,
            'final_prediction': self.final_prediction.value if self.final_prediction else None,
            'gold': self.gold.value if self.gold else None,
            'reward_breakdown': terminal,
            'step_count': len(self.steps),
            'error': self.error
        }
