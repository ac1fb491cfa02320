"""Engine error hierarchy."""

from typing import Any, Dict, Optional


class EngineError(Exception):
    """Base error; ``user_error`` decides the CLI exit code (1 vs 2)."""

    code = 'engine_error'
    user_error = False

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.message = message
        self.details = details or {}

    def to_dict(self) -> Dict[str, Any]:
        return {'error': self.code, 'message': self.message, 'details': self.details}


class TripleParseError(EngineError):
    code = 'triple_parse_error'
    user_error = True

    def __init__(self, message: str, line: int):
        super().__init__(message, details={'line': line})
        self.line = line


class GraphConsistencyError(EngineError):
    code = 'graph_consistency_error'
    user_error = True


class UnknownMetaPathError(EngineError):
    code = 'unknown_meta_path'
    user_error = True


class RetrievalError(EngineError):
    code = 'retrieval_error'

    def __init__(self, message: str, details: Optional[Dict[str, Any]] = None,
                 retryable: bool = False):
        super().__init__(message, details)
        self.retryable = retryable


class ConfigurationError(EngineError):
    code = 'configuration_error'
    user_error = True


class ProviderError(EngineError):
    code = 'provider_error'


class ShapeError(EngineError):
    code = 'shape_error'
    user_error = True


class NumericError(EngineError):
    code = 'numeric_error'


class NotLabelableError(EngineError):
    code = 'not_labelable'
    user_error = True


class InvariantViolation(EngineError):
    code = 'invariant_violation'
    user_error = True


class EpisodeNotFound(EngineError):
    code = 'episode_not_found'
    user_error = True


class EpisodeConflict(EngineError):
    code = 'episode_conflict'
    user_error = True


class UnknownPatientError(EngineError):
    code = 'unknown_patient'
    user_error = True
