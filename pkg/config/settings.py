"""
Engine Settings and Configuration

Defaults live in EngineSettings as plain dicts; EngineConfig validates a JSON
config document against them. Resolution order: explicit path, then the
GHAR_CONFIG environment variable, then built-in defaults. Dotted overrides
(e.g. ``agent.max_iterations=5``) are applied last.
"""

import json
import os
from pathlib import Path
from typing import Any, Dict, Mapping, Optional

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from config.constants import EngineConstants
from utils.exceptions import ConfigurationError

CONFIG_ENV_VAR = 'GHAR_CONFIG'


class EngineSettings:
    """Default engine settings"""

    PATH_SETTINGS = {
        'kg': 'store/kg.tsv',
        'catalog': 'store/catalog.json',
        'indexes_dir': 'store/indexes',
        'trajectories': 'store/trajectories.jsonl',
        'service_trajectories': 'store/service_trajectories.jsonl',
        'cohort': None,
        'references': None,
        'mock_script': None
    }

    # K rewrites, N per partition, I iterations, meta-path cap
    AGENT_SETTINGS = {
        'rewrites': 3,
        'top_n': 1,
        'max_iterations': 5,
        'max_meta_paths': 3,
        'ablation': 'none'
    }

    REWARD_SETTINGS = {
        'expected_length': 3,
        'eta': 5.0,
        'alpha': 0.1,
        'normalization': 'running_zscore',
        'rank_mode': 'literal'
    }

    RL_SETTINGS = {
        'gamma': 0.99,
        'lam': 0.95,
        'epsilon': 0.2,
        'critic_target': 'reward_to_go'
    }

    PROVIDER_SETTINGS = {
        'mode': 'mock',
        'embedding_mode': 'mock',
        'llm_endpoint': None,
        'llm_model': 'default',
        'low_llm_endpoint': None,
        'embedding_endpoint': None,
        'embedding_model': 'e5-base',
        'embeddings_file': None,
        'api_key_env': 'LLM_API_KEY',
        'logprobs': True,
        'timeout_seconds': 60.0,
        'max_retries': 2,
        'parallelism': 4,
        'embedding_dim': EngineConstants.MOCK_EMBEDDING['dim']
    }

    SERVICE_SETTINGS = {
        'host': '127.0.0.1',
        'port': 8080,
        'max_concurrent_episodes': 4
    }

    SEED = 7


class _Section(BaseModel):
    model_config = ConfigDict(extra='forbid')


class PathConfig(_Section):
    kg: str = EngineSettings.PATH_SETTINGS['kg']
    catalog: str = EngineSettings.PATH_SETTINGS['catalog']
    indexes_dir: str = EngineSettings.PATH_SETTINGS['indexes_dir']
    trajectories: str = EngineSettings.PATH_SETTINGS['trajectories']
    service_trajectories: str = EngineSettings.PATH_SETTINGS['service_trajectories']
    cohort: Optional[str] = EngineSettings.PATH_SETTINGS['cohort']
    references: Optional[str] = EngineSettings.PATH_SETTINGS['references']
    mock_script: Optional[str] = EngineSettings.PATH_SETTINGS['mock_script']


class AgentConfig(_Section):
    rewrites: int = Field(EngineSettings.AGENT_SETTINGS['rewrites'], ge=1)
    top_n: int = Field(EngineSettings.AGENT_SETTINGS['top_n'], ge=1)
    max_iterations: int = Field(EngineSettings.AGENT_SETTINGS['max_iterations'], ge=1)
    max_meta_paths: int = Field(EngineSettings.AGENT_SETTINGS['max_meta_paths'], ge=1)
    ablation: str = EngineSettings.AGENT_SETTINGS['ablation']

    @field_validator('ablation')
    @classmethod
    def _known_ablation(cls, value: str) -> str:
        if value not in EngineConstants.ABLATIONS:
            raise ValueError(f"ablation must be one of {EngineConstants.ABLATIONS}")
        return value


class RewardSection(_Section):
    expected_length: int = Field(EngineSettings.REWARD_SETTINGS['expected_length'], ge=1)
    eta: float = Field(EngineSettings.REWARD_SETTINGS['eta'], ge=0.0)
    alpha: float = EngineSettings.REWARD_SETTINGS['alpha']
    normalization: str = EngineSettings.REWARD_SETTINGS['normalization']
    rank_mode: str = EngineSettings.REWARD_SETTINGS['rank_mode']

    @field_validator('normalization')
    @classmethod
    def _known_normalization(cls, value: str) -> str:
        if value not in EngineConstants.NORMALIZATION_MODES:
            raise ValueError(f"normalization must be one of {EngineConstants.NORMALIZATION_MODES}")
        return value

    @field_validator('rank_mode')
    @classmethod
    def _known_rank_mode(cls, value: str) -> str:
        if value not in EngineConstants.RANK_MODES:
            raise ValueError(f"rank_mode must be one of {EngineConstants.RANK_MODES}")
        return value


class RLSection(_Section):
    gamma: float = Field(EngineSettings.RL_SETTINGS['gamma'], ge=0.0, le=1.0)
    lam: float = Field(EngineSettings.RL_SETTINGS['lam'], ge=0.0, le=1.0)
    epsilon: float = Field(EngineSettings.RL_SETTINGS['epsilon'], gt=0.0)
    critic_target: str = EngineSettings.RL_SETTINGS['critic_target']

    @field_validator('critic_target')
    @classmethod
    def _known_target(cls, value: str) -> str:
        if value not in EngineConstants.CRITIC_TARGETS:
            raise ValueError(f"critic_target must be one of {EngineConstants.CRITIC_TARGETS}")
        return value


class ProviderConfig(_Section):
    mode: str = EngineSettings.PROVIDER_SETTINGS['mode']
    embedding_mode: str = EngineSettings.PROVIDER_SETTINGS['embedding_mode']
    llm_endpoint: Optional[str] = EngineSettings.PROVIDER_SETTINGS['llm_endpoint']
    llm_model: str = EngineSettings.PROVIDER_SETTINGS['llm_model']
    low_llm_endpoint: Optional[str] = EngineSettings.PROVIDER_SETTINGS['low_llm_endpoint']
    embedding_endpoint: Optional[str] = EngineSettings.PROVIDER_SETTINGS['embedding_endpoint']
    embedding_model: str = EngineSettings.PROVIDER_SETTINGS['embedding_model']
    embeddings_file: Optional[str] = EngineSettings.PROVIDER_SETTINGS['embeddings_file']
    api_key_env: str = EngineSettings.PROVIDER_SETTINGS['api_key_env']
    logprobs: bool = EngineSettings.PROVIDER_SETTINGS['logprobs']
    timeout_seconds: float = Field(EngineSettings.PROVIDER_SETTINGS['timeout_seconds'], gt=0.0)
    max_retries: int = Field(EngineSettings.PROVIDER_SETTINGS['max_retries'], ge=0)
    parallelism: int = Field(EngineSettings.PROVIDER_SETTINGS['parallelism'], ge=1)
    embedding_dim: int = Field(EngineSettings.PROVIDER_SETTINGS['embedding_dim'], ge=1)

    @field_validator('mode')
    @classmethod
    def _known_mode(cls, value: str) -> str:
        if value not in ('mock', 'http'):
            raise ValueError("mode must be 'mock' or 'http'")
        return value

    @field_validator('embedding_mode')
    @classmethod
    def _known_embedding_mode(cls, value: str) -> str:
        if value not in ('mock', 'http', 'precomputed'):
            raise ValueError("embedding_mode must be 'mock', 'http' or 'precomputed'")
        return value


class ServiceConfig(_Section):
    host: str = EngineSettings.SERVICE_SETTINGS['host']
    port: int = Field(EngineSettings.SERVICE_SETTINGS['port'], ge=1, le=65535)
    max_concurrent_episodes: int = Field(
        EngineSettings.SERVICE_SETTINGS['max_concurrent_episodes'], ge=1
    )


class EngineConfig(_Section):
    """Complete engine configuration"""

    paths: PathConfig = Field(default_factory=PathConfig)
    agent: AgentConfig = Field(default_factory=AgentConfig)
    reward: RewardSection = Field(default_factory=RewardSection)
    rl: RLSection = Field(default_factory=RLSection)
    provider: ProviderConfig = Field(default_factory=ProviderConfig)
    service: ServiceConfig = Field(default_factory=ServiceConfig)
    seed: int = EngineSettings.SEED

    def snapshot(self) -> Dict[str, Any]:
        """Subset of the config that determines episode behaviour."""
        return {
            'seed': self.seed,
            'agent': self.agent.model_dump(),
            'reward': self.reward.model_dump(),
            'rl': self.rl.model_dump(),
            'provider_mode': self.provider.mode
        }

    def effective(self) -> 'EngineConfig':
        """Config as episodes see it; the NS ablation switches off eta and the rank reward."""
        if self.agent.ablation != 'NS':
            return self
        reward = self.reward.model_copy(update={'eta': 0.0, 'rank_mode': 'off'})
        return self.model_copy(update={'reward': reward})

    def with_overrides(self, overrides: Mapping[str, Any]) -> 'EngineConfig':
        data = self.model_dump()
        for dotted, value in overrides.items():
            _set_dotted(data, dotted, value)
        return _validate(data)


def _set_dotted(data: Dict[str, Any], dotted: str, value: Any) -> None:
    keys = dotted.split('.')
    node = data
    for key in keys[:-1]:
        if key not in node or not isinstance(node[key], dict):
            raise ConfigurationError(f"Unknown config key: {dotted}", details={'key': dotted})
        node = node[key]
    if keys[-1] not in node:
        raise ConfigurationError(f"Unknown config key: {dotted}", details={'key': dotted})
    node[keys[-1]] = value


def _validate(data: Dict[str, Any]) -> EngineConfig:
    try:
        return EngineConfig.model_validate(data)
    except ValidationError as exc:
        fields = {'.'.join(str(p) for p in err['loc']): err['msg'] for err in exc.errors()}
        raise ConfigurationError("Invalid engine configuration", details={'fields': fields}) from exc


def parse_override(assignment: str) -> tuple:
    """Split ``key=value``; the value is read as JSON when possible."""
    if '=' not in assignment:
        raise ConfigurationError(f"Override must look like key=value: {assignment}")
    key, raw = assignment.split('=', 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key.strip(), value


def load_config(path: Optional[str] = None,
                overrides: Optional[Mapping[str, Any]] = None) -> EngineConfig:
    """Load an EngineConfig from file/environment/defaults and apply overrides."""
    source = path or os.environ.get(CONFIG_ENV_VAR)
    data: Dict[str, Any] = {}
    if source:
        config_path = Path(source)
        if not config_path.is_file():
            raise ConfigurationError(f"Config file not found: {source}", details={'path': source})
        try:
            data = json.loads(config_path.read_text(encoding='utf-8'))
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"Config file is not valid JSON: {exc}",
                                     details={'path': source}) from exc
    config = _validate(data)
    if overrides:
        config = config.with_overrides(overrides)
    return config
