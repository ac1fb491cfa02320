"""
LLM Provider System

Provides a pluggable interface for LLM integration with:
- MockLLMProvider: deterministic scripted responses with scripted log-probs/values
- HttpLLMProvider: OpenAI-compatible chat completions over requests
"""

import json
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional

import requests
import structlog

from utils.exceptions import ConfigurationError, ProviderError

logger = structlog.get_logger(__name__)


@dataclass(frozen=True)
class LLMRequest:
    """One templated call: the tag and step drive mock matching."""

    tag: str
    step: int
    prompt: str
    variables: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class LLMResponse:
    text: str
    log_prob: Optional[float] = None
    ref_log_prob: Optional[float] = None
    value: Optional[float] = None


class LLMProvider(ABC):
    """Base interface for LLM providers; implementations must be thread-safe."""

    @abstractmethod
    def complete(self, request: LLMRequest) -> LLMResponse:
        """Generate a response for a rendered prompt."""

    @abstractmethod
    def get_name(self) -> str:
        """Get the provider name."""


class _SafeFormat(dict):
    def __missing__(self, key: str) -> str:
        return '{' + key + '}'


def _render(response: str, variables: Mapping[str, str]) -> str:
    try:
        return response.format_map(_SafeFormat(variables))
    except (ValueError, IndexError):
        # Literal braces that are not placeholders
        return response


# Used when no script file is configured: rewrite into three focus questions,
# retrieve twice, then answer with the first label of the task.
DEFAULT_SCRIPT: List[Dict[str, Any]] = [
    {'match': {'template_tag': 'query_rewrite'},
     'response': ("Which diagnoses in this record matter most: {diagnosis_names}?\n"
                  "Which procedures in this record matter most: {procedure_names}?\n"
                  "Which medications in this record matter most: {medication_names}?"),
     'log_prob': -0.5, 'value': 0.0},
    {'match': {'template_tag': 'top_decide', 'step': 1},
     'response': 'ROUTE: RAG; IDS: 0, 1; CONTROL: CONTINUE', 'log_prob': -0.4, 'value': 0.5},
    {'match': {'template_tag': 'top_decide', 'step': 2},
     'response': 'ROUTE: RAG; IDS: 2; CONTROL: CONTINUE', 'log_prob': -0.4, 'value': 0.6},
    {'match': {'template_tag': 'top_decide'},
     'response': 'ROUTE: LLM; CONTROL: TERMINATE', 'log_prob': -0.3, 'value': 0.7},
    {'match': {'template_tag': 'low_summarize', 'corpus_empty': 'yes'},
     'response': 'No external evidence found.', 'log_prob': -0.2, 'value': 0.0},
    {'match': {'template_tag': 'low_summarize'},
     'response': 'Relevant evidence: {evidence}', 'log_prob': -0.6, 'value': 0.0},
    {'match': {'template_tag': 'llm_answer'},
     'response': 'From prior knowledge: {query}', 'log_prob': -0.7, 'value': 0.0},
    {'match': {'template_tag': 'deepen'},
     'response': 'SUBQUERY: What further evidence explains the outcome for: {query}',
     'log_prob': -0.5, 'value': 0.0},
    {'match': {'template_tag': 'finalize'},
     'response': '<answer>{first_label}</answer>', 'log_prob': -0.1, 'value': 0.0},
]


class MockLLMProvider(LLMProvider):
    """
    Scripted provider: rules are evaluated top-down and the first match wins.

    A rule's ``match`` may name ``template_tag``, ``step`` and any prompt
    variable; absent keys match anything. Responses are formatted with the
    prompt variables, so ``{evidence}`` echoes the serialized corpus.
    """

    def __init__(self, rules: Optional[List[Dict[str, Any]]] = None):
        self.rules = list(DEFAULT_SCRIPT if rules is None else rules)
        for position, rule in enumerate(self.rules):
            if 'response' not in rule:
                raise ConfigurationError(f"Mock rule {position} has no response",
                                         details={'rule': position})

    @classmethod
    def from_file(cls, path) -> 'MockLLMProvider':
        path = Path(path)
        if not path.is_file():
            raise ConfigurationError(f"Mock script not found: {path}", details={'path': str(path)})
        rules = []
        for line_no, line in enumerate(path.read_text(encoding='utf-8').splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rules.append(json.loads(line))
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"Mock script line {line_no} is not JSON",
                                         details={'path': str(path), 'line': line_no}) from exc
        return cls(rules)

    def get_name(self) -> str:
        return 'mock'

    @staticmethod
    def _matches(match: Mapping[str, Any], request: LLMRequest) -> bool:
        for key, expected in match.items():
            if key == 'template_tag':
                actual: Any = request.tag
            elif key == 'step':
                actual = request.step
            else:
                actual = request.variables.get(key)
            if actual != expected:
                return False
        return True

    def complete(self, request: LLMRequest) -> LLMResponse:
        for rule in self.rules:
            if self._matches(rule.get('match', {}), request):
                text = _render(str(rule['response']), request.variables)
                log_prob = float(rule.get('log_prob', 0.0))
                return LLMResponse(
                    text=text,
                    log_prob=log_prob,
                    ref_log_prob=float(rule.get('ref_log_prob', log_prob)),
                    value=float(rule.get('value', 0.0))
                )
        logger.debug('mock_no_rule', tag=request.tag, step=request.step)
        return LLMResponse(text='', log_prob=0.0, ref_log_prob=0.0, value=0.0)


class HttpLLMProvider(LLMProvider):
    """
    OpenAI-compatible chat completions.

    The action log-prob is the mean token log-prob of the returned content.
    The same policy served the rollout, so it also stands in as the
    reference log-prob. No value head is exposed over this wire.
    """

    def __init__(self, endpoint: str, model: str, api_key: Optional[str] = None,
                 logprobs: bool = True, timeout: float = 60.0, max_retries: int = 2):
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.logprobs = logprobs
        self.timeout = timeout
        self.max_retries = max_retries

    def get_name(self) -> str:
        return f"http:{self.model}"

    def _post(self, payload: Dict[str, Any]) -> Dict[str, Any]:
        headers = {'Content-Type': 'application/json'}
        if self.api_key:
            headers['Authorization'] = f"Bearer {self.api_key}"
        last_error: Optional[Exception] = None
        for attempt in range(self.max_retries + 1):
            try:
                response = requests.post(self.endpoint, json=payload, headers=headers,
                                         timeout=self.timeout)
                response.raise_for_status()
                return response.json()
            except (requests.RequestException, ValueError) as exc:
                last_error = exc
                logger.warning('llm_request_failed', endpoint=self.endpoint,
                               attempt=attempt + 1, error=str(exc))
        raise ProviderError(f"LLM provider failed: {last_error}", details={'endpoint': self.endpoint})

    def complete(self, request: LLMRequest) -> LLMResponse:
        body = self._post({
            'model': self.model,
            'messages': [{'role': 'user', 'content': request.prompt}],
            'logprobs': self.logprobs
        })
        try:
            choice = body['choices'][0]
            text = choice['message']['content'] or ''
        except (KeyError, IndexError, TypeError) as exc:
            raise ProviderError("Malformed chat completion response",
                                details={'endpoint': self.endpoint}) from exc
        log_prob = mean_token_log_prob(choice.get('logprobs'))
        return LLMResponse(text=text, log_prob=log_prob, ref_log_prob=log_prob, value=None)


def mean_token_log_prob(logprobs: Any) -> Optional[float]:
    """Mean of ``logprobs.content[*].logprob``; None when absent."""
    if not isinstance(logprobs, dict):
        return None
    tokens = logprobs.get('content') or []
    values = [t.get('logprob') for t in tokens if isinstance(t, dict)]
    values = [float(v) for v in values if v is not None]
    if not values:
        return None
    mean = sum(values) / len(values)
    return mean if math.isfinite(mean) else None
