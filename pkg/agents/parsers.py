"""
Output Parsers
Grammar for routing decisions, rewrites, deepening sub-queries and answers

Features:
- ROUTE:/IDS:/CONTROL: markers, case-insensitive, ';' or newline separated
- <answer>...</answer> extraction matched against the task label space
- Total parsing: malformed text degrades to defaults with a format flag
"""

import re
from dataclasses import dataclass
from typing import List, Optional, Tuple

from config.constants import EngineConstants
from data.labels import Label, TaskSpec, label_of
from knowledge.meta_paths import MetaPathCatalog, MetaPathSelection, parse_meta_path_ids

_ROUTE = re.compile(r'\broute\s*:\s*(rag|llm)\b', re.IGNORECASE)
_CONTROL = re.compile(r'\bcontrol\s*:\s*(terminate|continue)\b', re.IGNORECASE)
# An ID list may continue on following lines that start with another ID token
_IDS = re.compile(r'\bids\s*:(.*?)(?=;|\n(?![ \t]*(?:[-*•][ \t]*)?[,(\d])|control\s*:|route\s*:|$)',
                  re.IGNORECASE | re.DOTALL)
_ANSWER = re.compile(r'<answer>(.*?)</answer>', re.IGNORECASE | re.DOTALL)
_SUBQUERY = re.compile(r'subquery\s*:\s*(.+)', re.IGNORECASE)
_LIST_PREFIX = re.compile(r'^\s*(?:[-*•]|\d+[.)])\s*')


@dataclass
class ParsedTopAction:
    route: str
    control: str
    selection: Optional[MetaPathSelection]
    malformed: bool


def parse_top_action(text: str, catalog: MetaPathCatalog,
                     max_meta_paths: int) -> ParsedTopAction:
    """
    Parse a routing decision.

    A missing route marker falls back to an LLM route, a missing control
    marker to CONTINUE; either flags the step as malformed. A RAG route
    without an IDS marker gets an empty selection and is malformed too.
    """
    text = text or ''
    malformed = False

    route_match = _ROUTE.search(text)
    if route_match is None:
        route, malformed = 'llm', True
    else:
        route = route_match.group(1).lower()

    control_match = _CONTROL.search(text)
    if control_match is None:
        control, malformed = 'continue', True
    else:
        control = control_match.group(1).lower()

    selection = None
    if route == 'rag':
        ids_match = _IDS.search(text)
        if ids_match is None:
            malformed = True
            selection = MetaPathSelection()
        else:
            selection = parse_meta_path_ids(ids_match.group(1), catalog, max_meta_paths)
    return ParsedTopAction(route=route, control=control, selection=selection, malformed=malformed)


def parse_prediction(text: str, task: TaskSpec) -> Tuple[Label, bool]:
    """Label plus format flag; unmatched text falls back to the first label."""
    match = _ANSWER.search(text or '')
    if match is not None:
        content = match.group(1).strip().lower()
        for value in task.label_space:
            if value.lower() == content:
                return label_of(task, value), True
    return label_of(task, task.label_space[0]), False


def parse_rewrites(text: str, k: int) -> List[str]:
    """Up to ``k`` nonblank lines with list bullets or numbering removed."""
    rewrites = []
    for line in (text or '').splitlines():
        cleaned = _LIST_PREFIX.sub('', line).strip()
        if cleaned:
            rewrites.append(cleaned)
        if len(rewrites) == k:
            break
    return rewrites


def parse_subquery(text: str) -> Optional[str]:
    """The SUBQUERY: line, else the first nonblank line; None when empty."""
    text = text or ''
    match = _SUBQUERY.search(text)
    if match is not None:
        candidate = match.group(1).strip()
        return candidate or None
    for line in text.splitlines():
        if line.strip() and EngineConstants.MARKERS['route'].lower() not in line.lower():
            return line.strip()
    return None
