"""
Reward Normalization
Identity, clamping and running z-score over a stream of rewards
"""

import math
from typing import Iterable, List

import numpy as np

from config.constants import EngineConstants
from utils.exceptions import ConfigurationError

LIMITS = EngineConstants.NORMALIZATION_LIMITS


class RewardNormalizer:
    """Stateful normalizer; one instance per scoring pass."""

    def __init__(self, mode: str = 'none'):
        if mode not in EngineConstants.NORMALIZATION_MODES:
            raise ConfigurationError(f"Unknown normalization mode: {mode}",
                                     details={'mode': mode})
        self.mode = mode
        self.count = 0
        self.mean = 0.0
        self._m2 = 0.0

    @property
    def std(self) -> float:
        return math.sqrt(self._m2 / self.count) if self.count else 0.0

    def _update(self, value: float) -> None:
        # Welford
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (value - self.mean)

    def __call__(self, value: float) -> float:
        if self.mode == 'none':
            return float(value)
        if self.mode == 'clamp':
            bound = LIMITS['clamp_bound']
            return float(np.clip(value, -bound, bound))
        self._update(float(value))
        return (value - self.mean) / max(self.std, LIMITS['std_floor'])

    def normalize_many(self, values: Iterable[float]) -> List[float]:
        return [self(v) for v in values]


def normalize(values: Iterable[float], mode: str) -> List[float]:
    return RewardNormalizer(mode).normalize_many(values)
