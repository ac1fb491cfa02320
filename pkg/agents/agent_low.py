"""
Low-Level Agent
Turns a retrieved subgraph into a task-relevant intermediate answer.
"""

from dataclasses import replace
from typing import Mapping, Tuple

from agents import templates
from agents.agent_top import TAGS, call_llm
from agents.providers import LLMProvider
from agents.state import LLMCall, LowState, TopState
from knowledge.meta_paths import MetaPathSelection
from retrieval.subgraph_retriever import RetrievedCorpus, serialize_corpus


def project_low_state(state: TopState, selection: MetaPathSelection) -> LowState:
    """Hand the current query, history and selection down to the low-level agent."""
    return LowState(query=state.query, history=state.history, selection=selection)


def with_corpus(state: LowState, corpus: RetrievedCorpus) -> LowState:
    return replace(state, corpus=corpus)


def low_summarize(state: LowState, llm: LLMProvider, step: int,
                  variables: Mapping[str, str]) -> Tuple[str, LLMCall]:
    evidence = serialize_corpus(state.corpus)
    history = templates.history_or_placeholder(state.history.render())
    prompt = templates.render_summarize(state.query.text, history, evidence)
    _, call = call_llm(llm, TAGS['summarize'], step, prompt, {
        **variables,
        'query': state.query.text,
        'history': history,
        'evidence': evidence,
        'corpus_empty': 'yes' if state.corpus.is_empty() else 'no'
    })
    return call.response.strip(), call
