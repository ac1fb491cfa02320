"""
Top-Level Agent
Query construction, rewriting, routing/termination decisions, parametric
answers, deepening and the final prediction.
"""

from typing import Callable, Dict, Mapping, Optional, Tuple

import structlog

from agents import templates
from agents.parsers import parse_prediction, parse_rewrites, parse_subquery, parse_top_action
from agents.providers import LLMProvider, LLMRequest, LLMResponse
from agents.state import LLMCall, Query, QueryQueue, ReasoningHistory, TopAction, TopState
from config.constants import EngineConstants
from data.labels import Label, TaskSpec, observed_visits
from data.records import PatientRecord
from knowledge.meta_paths import MetaPathCatalog, MetaPathSelection

logger = structlog.get_logger(__name__)

TAGS = EngineConstants.TEMPLATE_TAGS

NameLookup = Callable[[str], str]


def call_llm(llm: LLMProvider, tag: str, step: int, prompt: str,
             variables: Mapping[str, str]) -> Tuple[LLMResponse, LLMCall]:
    """Issue one call and return the response with its replay record."""
    response = llm.complete(LLMRequest(tag=tag, step=step, prompt=prompt, variables=dict(variables)))
    record = LLMCall(tag=tag, prompt=prompt, response=response.text, log_prob=response.log_prob,
                     ref_log_prob=response.ref_log_prob, value=response.value)
    return response, record


def _names(codes, name_of: NameLookup) -> str:
    seen: Dict[str, None] = {}
    for code in codes:
        seen.setdefault(name_of(code) or code)
    return ', '.join(seen) or 'none'


def patient_variables(task: TaskSpec, patient: PatientRecord, name_of: NameLookup) -> Dict[str, str]:
    """Template variables describing the patient, shared by every call of an episode."""
    visits = observed_visits(task, patient)
    return {
        'task': task.kind,
        'patient_id': patient.patient_id,
        'labels': ' | '.join(task.label_space),
        'first_label': task.label_space[0],
        'diagnosis_names': _names((c for v in visits for c in v.diagnoses), name_of),
        'procedure_names': _names((c for v in visits for c in v.procedures), name_of),
        'medication_names': _names((c for v in visits for c in v.medications), name_of),
    }


def build_query(task: TaskSpec, patient: PatientRecord, name_of: NameLookup) -> Query:
    """Initial query: task description, label space and per-visit codes with names."""
    text = templates.render_query(task, observed_visits(task, patient), name_of)
    return Query(text=text, origin='initial')


def rewrite_queries(q0: Query, k: int, llm: LLMProvider,
                    variables: Mapping[str, str]) -> Tuple[QueryQueue, LLMCall]:
    prompt = templates.render_rewrite(q0.text, k)
    response, call = call_llm(llm, TAGS['rewrite'], 0, prompt,
                              {**variables, 'query': q0.text, 'k': str(k)})
    rewrites = parse_rewrites(response.text, k)
    if not rewrites:
        logger.warning('rewrite_unparsable', requested=k)
        return QueryQueue([Query(text=q0.text, origin='initial')]), call
    if len(rewrites) < k:
        logger.warning('rewrite_short', requested=k, received=len(rewrites))
    return QueryQueue([Query(text=text, origin='rewrite') for text in rewrites]), call


def top_decide(state: TopState, catalog: MetaPathCatalog, llm: LLMProvider, step: int,
               max_meta_paths: int, variables: Mapping[str, str]
               ) -> Tuple[TopAction, Optional[MetaPathSelection], LLMResponse, LLMCall]:
    history = templates.history_or_placeholder(state.history.render())
    prompt = templates.render_decide(state.query.text, history,
                                     templates.render_catalog(f"{mp.index}: {mp.label()}"
                                                              for mp in catalog.paths),
                                     max_meta_paths)
    response, call = call_llm(llm, TAGS['decide'], step, prompt,
                              {**variables, 'query': state.query.text, 'history': history})
    parsed = parse_top_action(response.text, catalog, max_meta_paths)
    if parsed.malformed:
        logger.info('decision_malformed', step=step, response=response.text[:200])
    action = TopAction(route=parsed.route, control=parsed.control, malformed=parsed.malformed)
    return action, parsed.selection, response, call


def llm_answer(state: TopState, llm: LLMProvider, step: int,
               variables: Mapping[str, str]) -> Tuple[str, LLMCall]:
    """Intermediate answer from parametric knowledge alone."""
    history = templates.history_or_placeholder(state.history.render())
    prompt = templates.render_llm_answer(state.query.text, history)
    response, call = call_llm(llm, TAGS['llm_answer'], step, prompt,
                              {**variables, 'query': state.query.text, 'history': history})
    return response.text.strip(), call


def deepen(query: Query, history: ReasoningHistory, llm: LLMProvider, step: int,
           variables: Mapping[str, str]) -> Tuple[Optional[Query], LLMCall]:
    rendered = templates.history_or_placeholder(history.render())
    prompt = templates.render_deepen(query.text, rendered)
    response, call = call_llm(llm, TAGS['deepen'], step, prompt,
                              {**variables, 'query': query.text, 'history': rendered})
    text = parse_subquery(response.text)
    if text is None:
        logger.warning('deepen_unparsable', step=step)
        return None, call
    return Query(text=text, origin='deepening'), call


def finalize(q0: Query, history: ReasoningHistory, task: TaskSpec, llm: LLMProvider, step: int,
             variables: Mapping[str, str]) -> Tuple[Label, bool, str, LLMCall]:
    """Prediction from the original query plus the full reasoning history."""
    rendered = templates.history_or_placeholder(history.render())
    prompt = templates.render_final(q0.text, rendered)
    response, call = call_llm(llm, TAGS['finalize'], step, prompt,
                              {**variables, 'query': q0.text, 'history': rendered})
    label, format_ok = parse_prediction(response.text, task)
    return label, format_ok, response.text, call
