"""
Engine Runtime
Loads everything an episode needs from an EngineConfig

Features:
- Knowledge graph, meta-path catalog and partition indexes from the store
- Embedding and LLM providers built from the provider section
- Whole-graph index merged on first use (NT and NM ablations)
- Optional cohort lookup by patient id for the service
- Index checksums for health reporting
"""

import os
import threading
from pathlib import Path
from typing import Dict, Optional, Tuple

import structlog

from agents.episode import EpisodeResources, run_episode
from agents.providers import HttpLLMProvider, LLMProvider, MockLLMProvider
from agents.state import Trajectory
from calculations.rewards import ReferenceTrajectories, load_references
from config.settings import EngineConfig
from data.labels import TaskSpec
from data.records import CohortEntry, PatientRecord, read_cohort
from knowledge.graph_store import KnowledgeGraph, load_graph
from knowledge.meta_paths import MetaPathCatalog, catalog_meta_paths, load_catalog
from retrieval.embeddings import (
    EmbeddingProvider, HttpEmbeddingProvider, MockEmbeddingProvider, PrecomputedEmbeddingProvider
)
from retrieval.vector_index import PartitionIndex, load_indexes, merge_indexes
from utils.exceptions import ConfigurationError, UnknownPatientError
from utils.helpers import make_episode_id, sha256_file

logger = structlog.get_logger(__name__)

WHOLE_GRAPH_ABLATIONS = ('NT', 'NM')


def _api_key(config: EngineConfig) -> Optional[str]:
    env = config.provider.api_key_env
    return os.environ.get(env) if env else None


def build_embedder(config: EngineConfig) -> EmbeddingProvider:
    provider = config.provider
    if provider.embedding_mode == 'http':
        if not provider.embedding_endpoint:
            raise ConfigurationError("provider.embedding_endpoint is required for http embeddings")
        return HttpEmbeddingProvider(
            endpoint=provider.embedding_endpoint,
            model=provider.embedding_model,
            dim=provider.embedding_dim,
            api_key=_api_key(config),
            timeout=provider.timeout_seconds,
            max_retries=provider.max_retries,
            parallelism=provider.parallelism
        )
    if provider.embedding_mode == 'precomputed':
        if not provider.embeddings_file or not Path(provider.embeddings_file).is_file():
            raise ConfigurationError(f"Embeddings file not found: {provider.embeddings_file}",
                                     details={'path': provider.embeddings_file})
        return PrecomputedEmbeddingProvider(provider.embeddings_file)
    return MockEmbeddingProvider(dim=provider.embedding_dim)


def build_llm_providers(config: EngineConfig) -> Tuple[LLMProvider, LLMProvider]:
    """Top and low providers; they share one instance unless a low endpoint is set."""
    provider = config.provider
    if provider.mode == 'mock':
        script = config.paths.mock_script
        llm = MockLLMProvider.from_file(script) if script else MockLLMProvider()
        return llm, llm

    if not provider.llm_endpoint:
        raise ConfigurationError("provider.llm_endpoint is required in http mode")

    def http(endpoint: str) -> HttpLLMProvider:
        return HttpLLMProvider(endpoint=endpoint, model=provider.llm_model,
                               api_key=_api_key(config), logprobs=provider.logprobs,
                               timeout=provider.timeout_seconds,
                               max_retries=provider.max_retries)

    top = http(provider.llm_endpoint)
    low = http(provider.low_llm_endpoint) if provider.low_llm_endpoint else top
    return top, low


class EngineRuntime:
    """Shared read-only state behind every episode of a process"""

    def __init__(self, config: EngineConfig,
                 catalog: Optional[MetaPathCatalog],
                 indexes: Dict[int, PartitionIndex],
                 embedder: EmbeddingProvider,
                 top_llm: LLMProvider,
                 low_llm: LLMProvider,
                 kg: Optional[KnowledgeGraph] = None,
                 references: Optional[ReferenceTrajectories] = None,
                 patients: Optional[Dict[str, CohortEntry]] = None):
        self.config = config
        self.kg = kg
        self.catalog = catalog
        self.indexes = indexes
        self.embedder = embedder
        self.top_llm = top_llm
        self.low_llm = low_llm
        self.references = references or ReferenceTrajectories()
        self.patients = patients or {}
        self._positions = {patient_id: i for i, patient_id in enumerate(self.patients)}
        self._merged: Optional[PartitionIndex] = None
        self._merge_lock = threading.Lock()

        for mp_index, index in indexes.items():
            if index.dim != embedder.dim:
                raise ConfigurationError(
                    f"Index for meta-path {mp_index} has dimension {index.dim}, "
                    f"embedding provider produces {embedder.dim}",
                    details={'meta_path': mp_index, 'index_dim': index.dim,
                             'provider_dim': embedder.dim}
                )

    @classmethod
    def from_config(cls, config: EngineConfig, strict: bool = True) -> 'EngineRuntime':
        """
        Load the store described by ``config.paths``.

        With ``strict`` a missing knowledge graph is an error; otherwise
        the runtime starts empty and reports itself as not ready.
        """
        paths = config.paths
        kg = None
        if strict or Path(paths.kg).is_file():
            kg = load_graph(paths.kg)

        catalog = None
        if Path(paths.catalog).is_file():
            catalog = load_catalog(Path(paths.catalog).read_text(encoding='utf-8'))
        elif kg is not None:
            catalog = catalog_meta_paths(kg)

        patients = {}
        if paths.cohort:
            patients = {entry.patient.patient_id: entry for entry in read_cohort(Path(paths.cohort))}

        top_llm, low_llm = build_llm_providers(config)
        runtime = cls(
            config=config,
            kg=kg,
            catalog=catalog,
            indexes=load_indexes(Path(paths.indexes_dir)),
            embedder=build_embedder(config),
            top_llm=top_llm,
            low_llm=low_llm,
            references=load_references(paths.references),
            patients=patients
        )
        logger.info('runtime_loaded', nodes=len(kg.nodes) if kg else 0,
                    meta_paths=len(catalog) if catalog else 0, indexes=len(runtime.indexes),
                    provider_mode=config.provider.mode, patients=len(patients))
        return runtime

    @property
    def ready(self) -> bool:
        return self.catalog is not None

    def name_of(self, code: str) -> str:
        return self.kg.name_of(code) if self.kg is not None else ''

    def merged_index(self) -> Optional[PartitionIndex]:
        if not self.indexes:
            return None
        with self._merge_lock:
            if self._merged is None:
                self._merged = merge_indexes([self.indexes[i] for i in sorted(self.indexes)])
                logger.info('whole_graph_index_merged', nodes=len(self._merged.nodes),
                            edges=len(self._merged.edges))
        return self._merged

    def resources(self, config: Optional[EngineConfig] = None) -> EpisodeResources:
        config = config or self.config
        if self.catalog is None:
            raise ConfigurationError("No meta-path catalog loaded (run ingest first)",
                                     details={'path': self.config.paths.catalog})
        whole_graph = config.agent.ablation in WHOLE_GRAPH_ABLATIONS
        return EpisodeResources(
            catalog=self.catalog,
            indexes=self.indexes,
            embedder=self.embedder,
            top_llm=self.top_llm,
            low_llm=self.low_llm,
            name_of=self.name_of,
            merged_index=self.merged_index() if whole_graph else None,
            references=self.references
        )

    def episode_id(self, task: TaskSpec, patient_id: str, ordinal: int,
                   config: Optional[EngineConfig] = None) -> str:
        return make_episode_id((config or self.config).seed, task.kind, patient_id, ordinal)

    def run(self, task: TaskSpec, patient: PatientRecord, ordinal: int,
            config: Optional[EngineConfig] = None) -> Trajectory:
        config = config or self.config
        episode_id = self.episode_id(task, patient.patient_id, ordinal, config)
        return run_episode(task, patient, config, self.resources(config), episode_id)

    def cohort_position(self, patient_id: str) -> Optional[int]:
        """Line position in the configured cohort file, the ordinal `cli run` would use."""
        return self._positions.get(patient_id)

    def patient(self, patient_id: str) -> PatientRecord:
        entry = self.patients.get(patient_id)
        if entry is None:
            raise UnknownPatientError(f"Unknown patient_id: {patient_id}",
                                      details={'patient_id': patient_id})
        return entry.patient

    def index_checksums(self) -> Dict[str, str]:
        directory = Path(self.config.paths.indexes_dir)
        if not directory.is_dir():
            return {}
        return {path.name: sha256_file(path) for path in sorted(directory.glob('partition_*.json'))}
