import json
from pathlib import Path

import pytest
import structlog

from config.settings import EngineConfig, load_config
from data.cohort import CohortSpec, gen_synthetic_cohort
from data.records import PatientRecord, Visit, write_cohort
from knowledge.graph_store import ingest_triples
from knowledge.meta_paths import catalog_meta_paths, export_catalog, partition_all
from knowledge.synthetic_kg import gen_synthetic_kg
from retrieval.embeddings import MockEmbeddingProvider
from retrieval.vector_index import build_index, save_index

TOY_TRIPLES = [
    "m1\tdrug\tAspirin\tdrug_protein\tg1\tgene/protein\tPTGS1",
    "m1\tdrug\tAspirin\tdrug_protein\tg2\tgene/protein\tPTGS2",
    "m2\tdrug\tOseltamivir\tdrug_protein\tg3\tgene/protein\tNEU1",
    "d1\tdisease\tFlu\ttreated_by\tm2\tdrug\tOseltamivir",
    "d2\tdisease\tFever\ttreated_by\tm1\tdrug\tAspirin",
]


@pytest.fixture
def toy_kg():
    return ingest_triples(TOY_TRIPLES)


@pytest.fixture
def toy_catalog(toy_kg):
    return catalog_meta_paths(toy_kg)


@pytest.fixture(autouse=True)
def _no_config_env(monkeypatch):
    monkeypatch.delenv('GHAR_CONFIG', raising=False)


@pytest.fixture(autouse=True)
def _reset_logging():
    yield
    structlog.reset_defaults()


def make_visit(encounter: float, stay: float = 1.0, **codes) -> Visit:
    return Visit(encounter_time=encounter, discharge_time=encounter + stay, **codes)


def make_patient(patient_id: str = 'P1', encounters=(0.0,), stays=None, **codes) -> PatientRecord:
    stays = stays or [1.0] * len(encounters)
    return PatientRecord(patient_id=patient_id,
                         visits=[make_visit(e, s, **codes) for e, s in zip(encounters, stays)])


def build_store(root: Path, n_nodes: int = 200, kg_seed: int = 0,
                overrides: dict = None) -> EngineConfig:
    """Write a synthetic KG, its catalog and every partition index under ``root``."""
    root.mkdir(parents=True, exist_ok=True)
    lines = gen_synthetic_kg(seed=kg_seed, n_nodes=n_nodes)
    kg_path = root / 'kg.tsv'
    kg_path.write_text('\n'.join(lines) + '\n', encoding='utf-8')

    kg = ingest_triples(lines)
    catalog = catalog_meta_paths(kg)
    (root / 'catalog.json').write_text(export_catalog(catalog), encoding='utf-8')
    provider = MockEmbeddingProvider()
    for part in partition_all(kg, catalog):
        save_index(build_index(part, provider), root / 'indexes')

    document = {
        'paths': {
            'kg': str(kg_path),
            'catalog': str(root / 'catalog.json'),
            'indexes_dir': str(root / 'indexes'),
            'trajectories': str(root / 'trajectories.jsonl'),
            'service_trajectories': str(root / 'service.jsonl')
        }
    }
    config_path = root / 'config.json'
    config_path.write_text(json.dumps(document), encoding='utf-8')
    return load_config(str(config_path), overrides)


@pytest.fixture
def store_config(tmp_path) -> EngineConfig:
    return build_store(tmp_path / 'store')


@pytest.fixture
def cohort_file(tmp_path) -> Path:
    path = tmp_path / 'cohort.jsonl'
    write_cohort(gen_synthetic_cohort(CohortSpec(seed=3, n_patients=10)), path)
    return path


def write_script(path: Path, rules) -> Path:
    path.write_text('\n'.join(json.dumps(rule) for rule in rules) + '\n', encoding='utf-8')
    return path


# Decides to retrieve forever; every step deepens
CONTINUE_FOREVER = [
    {'match': {'template_tag': 'query_rewrite'}, 'response': 'first angle\nsecond angle\nthird angle'},
    {'match': {'template_tag': 'top_decide'}, 'response': 'ROUTE: RAG; IDS: 0; CONTROL: CONTINUE',
     'log_prob': -0.2, 'value': 0.1},
    {'match': {'template_tag': 'low_summarize'}, 'response': 'Evidence: {evidence}'},
    {'match': {'template_tag': 'deepen'}, 'response': 'SUBQUERY: what else about {patient_id}'},
    {'match': {'template_tag': 'finalize'}, 'response': '<answer>{first_label}</answer>'},
]
