"""
Prompt Templates
Prompt texts for query construction, rewriting, routing, summarization,
deepening and the final answer.
"""

from typing import Callable, Iterable, List, Optional

from config.constants import EngineConstants
from data.labels import TaskSpec
from data.records import Visit

M = EngineConstants.MARKERS

QUERY_TEMPLATE = """You are a clinical prediction assistant.
Task: {description}

Patient record ({visit_count} visits, oldest first):
{visits}

Answer options: {options}
Answer format: reply with exactly one option wrapped in {answer_open}{answer_close}, for example {answer_open}{example}{answer_close}."""

REWRITE_TEMPLATE = """Rewrite the clinical question below into {k} different sub-questions that together cover it.
Write one sub-question per line and nothing else.

Question:
{query}"""

DECIDE_TEMPLATE = """You coordinate the reasoning for a clinical prediction.

Current sub-question:
{query}

Reasoning so far:
{history}

Knowledge-graph meta-paths you may search (index: (head type, relation, tail type)):
{catalog}

Decide two things.
1. Route: answer from your own knowledge (LLM) or search the knowledge graph (RAG). For RAG list at most {max_meta_paths} meta-path indices.
2. Control: TERMINATE if the reasoning so far is enough for the final prediction, otherwise CONTINUE.

Reply on one line in this format:
{route_marker} RAG; {ids_marker} 0, 2; {control_marker} CONTINUE
or
{route_marker} LLM; {control_marker} TERMINATE"""

LLM_ANSWER_TEMPLATE = """Answer the clinical sub-question below from your own medical knowledge in two or three sentences.

Reasoning so far:
{history}

Sub-question:
{query}"""

SUMMARIZE_TEMPLATE = """Summarize the knowledge-graph evidence that helps answer the sub-question.
Keep only facts relevant to the question; say so if nothing is relevant.

Reasoning so far:
{history}

Sub-question:
{query}

Retrieved evidence:
{evidence}"""

DEEPEN_TEMPLATE = """The reasoning below is not yet sufficient for the final prediction.
Write one follow-up sub-question that would close the most important gap.
Reply as: {subquery_marker} <question>

Reasoning so far:
{history}

Last sub-question:
{query}"""

FINAL_TEMPLATE = """{query}

Intermediate findings:
{history}

Give the final prediction now. {answer_open}option{answer_close}"""

NO_HISTORY = '(none yet)'
NO_EVIDENCE = '(no evidence retrieved)'


def _codes(label: str, codes: Iterable[str], name_of: Callable[[str], str]) -> str:
    rendered = []
    for code in codes:
        name = name_of(code)
        rendered.append(f"{code} ({name})" if name else code)
    return f"  {label}: {', '.join(rendered) if rendered else 'none'}"


def render_visits(visits: List[Visit], name_of: Callable[[str], str]) -> str:
    blocks = []
    for number, visit in enumerate(visits, start=1):
        blocks.append('\n'.join([
            f"Visit {number}:",
            _codes('Diagnoses', visit.diagnoses, name_of),
            _codes('Procedures', visit.procedures, name_of),
            _codes('Medications', visit.medications, name_of),
        ]))
    return '\n'.join(blocks)


def render_query(task: TaskSpec, visits: List[Visit], name_of: Callable[[str], str]) -> str:
    return QUERY_TEMPLATE.format(
        description=task.description,
        visit_count=len(visits),
        visits=render_visits(visits, name_of),
        options=' | '.join(task.label_space),
        answer_open=M['answer_open'],
        answer_close=M['answer_close'],
        example=task.label_space[0]
    )


def render_rewrite(query: str, k: int) -> str:
    return REWRITE_TEMPLATE.format(k=k, query=query)


def render_decide(query: str, history: str, catalog: str, max_meta_paths: int) -> str:
    return DECIDE_TEMPLATE.format(
        query=query, history=history, catalog=catalog, max_meta_paths=max_meta_paths,
        route_marker=M['route'], ids_marker=M['ids'], control_marker=M['control']
    )


def render_llm_answer(query: str, history: str) -> str:
    return LLM_ANSWER_TEMPLATE.format(query=query, history=history)


def render_summarize(query: str, history: str, evidence: str) -> str:
    return SUMMARIZE_TEMPLATE.format(query=query, history=history,
                                     evidence=evidence or NO_EVIDENCE)


def render_deepen(query: str, history: str) -> str:
    return DEEPEN_TEMPLATE.format(query=query, history=history,
                                  subquery_marker=M['subquery'])


def render_final(query: str, history: str) -> str:
    return FINAL_TEMPLATE.format(query=query, history=history,
                                 answer_open=M['answer_open'], answer_close=M['answer_close'])


def render_catalog(lines: Iterable[str]) -> str:
    return '\n'.join(lines) or '(empty catalog)'


def history_or_placeholder(rendered: Optional[str]) -> str:
    return rendered if rendered else NO_HISTORY
