"""
Episode Runner
Runs one prediction episode end to end and returns its reward-annotated trajectory

Features:
- Rewrite queue, route/terminate decisions, retrieval and summarization
- Forced termination at the iteration cap or when the queue drains
- Component ablations (NI, NT, NL, NM, NS) selected through agent.ablation
- Failed episodes keep the steps completed so far
"""

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional

import structlog

from agents import templates
from agents.agent_low import low_summarize, project_low_state, with_corpus
from agents.agent_top import (
    TAGS, build_query, deepen, finalize, llm_answer, patient_variables, rewrite_queries,
    top_decide
)
from agents.providers import LLMProvider
from agents.state import (
    LLMCall, ProvenanceRecord, Query, QueryQueue, ReasoningHistory, RewardBreakdown,
    SelectionRecord, StepRecord, TopAction, TopState, Trajectory
)
from calculations.rewards import ReferenceTrajectories, RewardCalculator, RewardConfig
from config.settings import EngineConfig
from data.labels import Label, TaskSpec, gold_label
from data.records import PatientRecord
from knowledge.meta_paths import MetaPathCatalog, MetaPathSelection
from retrieval.embeddings import EmbeddingProvider
from retrieval.subgraph_retriever import (
    RetrievedCorpus, retrieve_subgraph, retrieve_whole_graph, serialize_corpus
)
from retrieval.vector_index import PartitionIndex
from utils.exceptions import EngineError, NotLabelableError

logger = structlog.get_logger(__name__)

INTERNAL_ERROR = 'internal_error'


@dataclass
class EpisodeResources:
    """Shared, read-only inputs of every episode."""

    catalog: MetaPathCatalog
    indexes: Dict[int, PartitionIndex]
    embedder: EmbeddingProvider
    top_llm: LLMProvider
    low_llm: LLMProvider
    name_of: Callable[[str], str] = lambda code: ''
    merged_index: Optional[PartitionIndex] = None
    references: ReferenceTrajectories = field(default_factory=ReferenceTrajectories)


@dataclass
class _StepDraft:
    iteration: int
    query: Query
    action: TopAction
    selection: Optional[MetaPathSelection] = None
    corpus: RetrievedCorpus = field(default_factory=RetrievedCorpus)
    corpus_text: str = ''
    answer: str = ''
    calls: List[LLMCall] = field(default_factory=list)
    components: dict = field(default_factory=dict)

    def record(self, breakdown: Optional[dict] = None) -> StepRecord:
        return StepRecord(
            iteration=self.iteration,
            query=self.query,
            top_action=self.action,
            selection=SelectionRecord.of(self.selection) if self.selection is not None else None,
            provenance=[ProvenanceRecord(**p.to_dict()) for p in self.corpus.provenance],
            corpus_text=self.corpus_text,
            intermediate_answer=self.answer,
            action_log_prob=self._action_log_prob(),
            ref_log_prob=self._action_log_prob(reference=True),
            value_estimate=self._value(),
            reward_breakdown=RewardBreakdown(**breakdown) if breakdown else RewardBreakdown(),
            llm_calls=list(self.calls)
        )

    def _value(self) -> Optional[float]:
        """Critic estimate from the routing call, else from the first call of the step."""
        decide = [c for c in self.calls if c.tag == TAGS['decide']]
        source = decide or self.calls
        return source[0].value if source else None

    def _action_call(self) -> Optional[LLMCall]:
        """The top-level action of the step: finalize when terminal, else the routing call."""
        tags = [TAGS['finalize'], TAGS['decide']] if self.action.control == 'terminate' else [TAGS['decide']]
        for tag in tags:
            for call in self.calls:
                if call.tag == tag:
                    return call
        return None

    def _action_log_prob(self, reference: bool = False) -> Optional[float]:
        call = self._action_call()
        # NT steps take a fixed action without a top-level call
        if call is None:
            return 0.0
        return call.ref_log_prob if reference else call.log_prob


def _gold(task: TaskSpec, patient: PatientRecord) -> Optional[Label]:
    try:
        return gold_label(task, patient)
    except NotLabelableError:
        return None


def run_episode(task: TaskSpec, patient: PatientRecord, config: EngineConfig,
                resources: EpisodeResources, episode_id: str,
                gold: Optional[Label] = None) -> Trajectory:
    """Execute one episode; provider and retrieval failures yield a failed trajectory."""
    config = config.effective()
    agent = config.agent
    ablation = agent.ablation
    calculator = RewardCalculator(RewardConfig.from_section(config.reward), resources.references)
    log = logger.bind(episode_id=episode_id, task=task.kind, patient_id=patient.patient_id)

    trajectory = Trajectory(
        episode_id=episode_id, task=task, patient_id=patient.patient_id, seed=config.seed,
        config=config.snapshot(), initial_query='',
        gold=gold if gold is not None else _gold(task, patient)
    )
    drafts: List[_StepDraft] = []
    history = ReasoningHistory()
    log.info('episode_started', ablation=ablation)

    try:
        variables = patient_variables(task, patient, resources.name_of)
        q0 = build_query(task, patient, resources.name_of)
        trajectory.initial_query = q0.text

        if ablation == 'NI':
            queue, max_iterations = QueryQueue([q0]), 1
        else:
            queue, call = rewrite_queries(q0, agent.rewrites, resources.top_llm, variables)
            trajectory.episode_calls.append(call)
            trajectory.rewrites = [q.text for q in queue]
            max_iterations = agent.max_iterations

        t = 0
        while queue and t < max_iterations:
            t += 1
            query = queue.dequeue()
            state = TopState(query=query, history=history)
            draft = _StepDraft(iteration=t, query=query, action=TopAction(route='rag', control='continue'))
            drafts.append(draft)

            if ablation == 'NT':
                draft.action = TopAction(route='rag',
                                         control='terminate' if not queue else 'continue')
            else:
                draft.action, draft.selection, _, call = top_decide(
                    state, resources.catalog, resources.top_llm, t, agent.max_meta_paths, variables
                )
                draft.calls.append(call)

            if t == max_iterations and draft.action.control != 'terminate':
                draft.action = draft.action.model_copy(update={'control': 'terminate', 'forced': True})
                log.info('terminate_forced', step=t)

            if draft.action.route == 'rag':
                low = project_low_state(state, draft.selection or MetaPathSelection())
                if ablation in ('NT', 'NM'):
                    corpus = retrieve_whole_graph(query.text, resources.merged_index,
                                                  agent.top_n, resources.embedder)
                else:
                    corpus = retrieve_subgraph(query.text, low.selection, resources.indexes,
                                               agent.top_n, resources.embedder)
                low = with_corpus(low, corpus)
                draft.corpus = corpus
                draft.corpus_text = serialize_corpus(corpus)
                if ablation == 'NL':
                    draft.answer = draft.corpus_text or templates.NO_EVIDENCE
                else:
                    draft.answer, call = low_summarize(low, resources.low_llm, t, variables)
                    draft.calls.append(call)
            else:
                draft.answer, call = llm_answer(state, resources.top_llm, t, variables)
                draft.calls.append(call)

            history.append(query.text, draft.answer, draft.action.route)
            draft.components = calculator.step_components(
                draft.action.route, draft.selection, draft.answer, query.text, draft.corpus_text
            )
            log.debug('step_completed', step=t, route=draft.action.route,
                      control=draft.action.control, items=len(draft.corpus.provenance))

            if draft.action.control == 'terminate':
                break
            if ablation != 'NT':
                follow_up, call = deepen(query, history, resources.top_llm, t, variables)
                draft.calls.append(call)
                if follow_up is not None:
                    queue.enqueue(follow_up)

        last = drafts[-1]
        if last.action.control != 'terminate':
            last.action = last.action.model_copy(update={'control': 'terminate', 'forced': True})
            log.info('terminate_forced', step=last.iteration, reason='queue_exhausted')

        label, format_ok, response, call = finalize(q0, history, task, resources.top_llm,
                                                    len(drafts), variables)
        last.calls.append(call)
        trajectory.final_response = response
        trajectory.final_prediction = label
        trajectory.answer_format = format_ok

        terminal = calculator.terminal_components(
            history_len=len(history), history_text=history.render(), prediction=label,
            prediction_format_ok=format_ok, gold=trajectory.gold,
            steps_format_ok=not any(d.action.malformed for d in drafts)
        )
        trajectory.steps = [
            draft.record(calculator.compose(
                {**draft.components, **(terminal if draft is last else {})}
            ))
            for draft in drafts
        ]
    except EngineError as exc:
        trajectory.status = 'failed'
        trajectory.error = exc.message
        trajectory.error_code = exc.code
        trajectory.steps = [draft.record() for draft in drafts]
        log.warning('episode_failed', error=exc.message, code=exc.code, steps=len(drafts))
        return trajectory
    except Exception as exc:
        # Non-engine faults fail this episode only
        trajectory.status = 'failed'
        trajectory.error = f"{type(exc).__name__}: {exc}"
        trajectory.error_code = INTERNAL_ERROR
        trajectory.steps = [draft.record() for draft in drafts]
        log.error('episode_crashed', error=trajectory.error, steps=len(drafts), exc_info=True)
        return trajectory

    log.info('episode_completed', steps=len(trajectory.steps),
             prediction=label.value, gold=trajectory.gold.value if trajectory.gold else None)
    return trajectory
