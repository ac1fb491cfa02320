import asyncio
from pathlib import Path

import httpx
import pytest
from fastapi.testclient import TestClient

from agents.providers import LLMProvider, LLMRequest, LLMResponse
from app import create_app
from cli import main
from config.settings import load_config
from data.records import read_cohort
from runtime import EngineRuntime
from utils.exceptions import ProviderError
from utils.helpers import make_episode_id


class OutageProvider(LLMProvider):
    def complete(self, request: LLMRequest) -> LLMResponse:
        raise ProviderError('upstream unavailable', details={'endpoint': 'http://llm'})

    def get_name(self) -> str:
        return 'outage'


class CrashingProvider(OutageProvider):
    def complete(self, request: LLMRequest) -> LLMResponse:
        raise RuntimeError('malformed upstream payload')


@pytest.fixture
def patients(cohort_file):
    return [entry.patient for entry in read_cohort(cohort_file)]


@pytest.fixture
def client(store_config):
    with TestClient(create_app(store_config)) as test_client:
        yield test_client


def episode_body(patient, **extra):
    return {'task': 'DEC', 'patient': patient.model_dump(mode='json'), **extra}


class TestEpisodes:
    def test_post_then_get_matches_cli_line(self, store_config, tmp_path, cohort_file, patients):
        config_path = Path(store_config.paths.kg).parent / 'config.json'
        assert main(['--config', str(config_path), 'run', '--cohort', str(cohort_file),
                     '--task', 'DEC', '--limit', '1']) == 0
        cli_line = Path(store_config.paths.trajectories).read_text(encoding='utf-8').splitlines()[0]

        with TestClient(create_app(store_config)) as client:
            response = client.post('/v1/episodes', json=episode_body(patients[0], ordinal=0))
            assert response.status_code == 200
            episode_id = response.json()['episode_id']
            stored = client.get(f"/v1/episodes/{episode_id}")
        assert stored.status_code == 200
        assert stored.text == cli_line

    def test_result_summary(self, client, patients):
        body = client.post('/v1/episodes', json=episode_body(patients[1])).json()
        assert body['status'] == 'completed'
        assert body['final_prediction'] == 'no'
        assert body['step_count'] == 3
        assert set(body['reward_breakdown']) >= {'r_all', 'r_cost', 'r_orm', 'r_rank'}

    def test_patient_by_id(self, store_config, cohort_file, patients):
        config = store_config.with_overrides({'paths.cohort': str(cohort_file)})
        with TestClient(create_app(config)) as client:
            response = client.post('/v1/episodes',
                                   json={'task': 'DEC', 'patient_id': patients[2].patient_id})
            assert response.status_code == 200
            unknown = client.post('/v1/episodes', json={'task': 'DEC', 'patient_id': 'nobody'})
        assert unknown.status_code == 400
        assert unknown.json()['error'] == 'unknown_patient'

    def test_cohort_patient_gets_cohort_ordinal(self, store_config, cohort_file, patients):
        config = store_config.with_overrides({'paths.cohort': str(cohort_file)})
        body = {'task': 'DEC', 'patient_id': patients[2].patient_id}
        with TestClient(create_app(config)) as client:
            first = client.post('/v1/episodes', json=body)
            again = client.post('/v1/episodes', json=body)
        assert first.json()['episode_id'] == make_episode_id(config.seed, 'DEC',
                                                             patients[2].patient_id, 2)
        assert again.status_code == 409

    def test_per_episode_overrides(self, client, patients):
        response = client.post('/v1/episodes', json=episode_body(
            patients[0], config={'agent.max_iterations': 1}))
        assert response.json()['step_count'] == 1
        stored = client.get(f"/v1/episodes/{response.json()['episode_id']}").json()
        assert stored['config']['agent']['max_iterations'] == 1

    def test_persisted_to_service_store(self, store_config, client, patients):
        client.post('/v1/episodes', json=episode_body(patients[0]))
        lines = Path(store_config.paths.service_trajectories).read_text(encoding='utf-8').splitlines()
        assert len(lines) == 1

    def test_twenty_concurrent_posts(self, store_config, patients):
        app = create_app(store_config)

        async def submit_all():
            transport = httpx.ASGITransport(app=app)
            async with httpx.AsyncClient(transport=transport, base_url='http://test') as client:
                requests = [client.post('/v1/episodes', json=episode_body(patients[i % len(patients)]))
                            for i in range(20)]
                return await asyncio.gather(*requests)

        responses = asyncio.run(submit_all())
        assert [r.status_code for r in responses] == [200] * 20
        ids = {r.json()['episode_id'] for r in responses}
        assert len(ids) == 20
        assert len(app.state.service.store) == 20


class TestErrors:
    def test_field_errors(self, client):
        response = client.post('/v1/episodes', json={'task': 'MORTALITY', 'patient_id': 'P1'})
        assert response.status_code == 400
        body = response.json()
        assert body['error'] == 'validation_error'
        assert 'task' in body['details']['fields']

    def test_missing_patient(self, client):
        response = client.post('/v1/episodes', json={'task': 'DEC'})
        assert response.status_code == 400

    def test_unknown_field(self, client, patients):
        response = client.post('/v1/episodes', json=episode_body(patients[0], colour='blue'))
        assert response.status_code == 400
        assert 'colour' in response.json()['details']['fields']

    def test_paths_not_overridable(self, client, patients):
        response = client.post('/v1/episodes', json=episode_body(
            patients[0], config={'paths.trajectories': '/tmp/x'}))
        assert response.status_code == 400

    def test_unknown_episode(self, client):
        response = client.get('/v1/episodes/01ARZ3NDEKTSV4RRFFQ69G5FAV')
        assert response.status_code == 404
        assert response.json()['error'] == 'episode_not_found'

    def test_duplicate_ordinal(self, client, patients):
        first = client.post('/v1/episodes', json=episode_body(patients[0], ordinal=5))
        second = client.post('/v1/episodes', json=episode_body(patients[0], ordinal=5))
        assert first.status_code == 200
        assert second.status_code == 409

    def test_read_needs_two_visits(self, client, patients):
        single = next((p for p in patients if len(p.visits) == 1), None)
        if single is None:
            pytest.skip('cohort has no single-visit patient')
        response = client.post('/v1/episodes', json={**episode_body(single), 'task': 'READ'})
        assert response.status_code == 400
        assert response.json()['error'] == 'not_labelable'

    def test_provider_outage(self, store_config, patients):
        runtime = EngineRuntime.from_config(store_config)
        runtime.top_llm = OutageProvider()
        with TestClient(create_app(runtime=runtime)) as client:
            response = client.post('/v1/episodes', json=episode_body(patients[0]))
            assert response.status_code == 502
            assert response.json()['status'] == 'failed'
            stored = client.get(f"/v1/episodes/{response.json()['episode_id']}").json()
        assert stored['error_code'] == 'provider_error'

    def test_unexpected_failure_is_stored(self, store_config, patients):
        runtime = EngineRuntime.from_config(store_config)
        runtime.top_llm = CrashingProvider()
        with TestClient(create_app(runtime=runtime)) as client:
            response = client.post('/v1/episodes', json=episode_body(patients[0]))
            assert response.status_code == 500
            assert response.json()['status'] == 'failed'
            stored = client.get(f"/v1/episodes/{response.json()['episode_id']}").json()
        assert stored['error_code'] == 'internal_error'


class TestInfo:
    def test_health_on_empty_store(self, tmp_path):
        config = load_config(overrides={
            'paths.kg': str(tmp_path / 'kg.tsv'),
            'paths.catalog': str(tmp_path / 'catalog.json'),
            'paths.indexes_dir': str(tmp_path / 'indexes'),
            'paths.service_trajectories': str(tmp_path / 'service.jsonl'),
        })
        with TestClient(create_app(config)) as client:
            health = client.get('/v1/health')
            assert health.status_code == 200
            body = health.json()
            assert body['indexes'] == {'count': 0, 'checksums': {}}
            assert body['ready'] is False
            assert client.get('/v1/catalog').json() == []
            assert client.post('/v1/episodes', json={'task': 'DEC', 'patient_id': 'P1'}).status_code == 503

    def test_health_reports_checksums(self, client, store_config):
        body = client.get('/v1/health').json()
        files = sorted(Path(store_config.paths.indexes_dir).glob('partition_*.json'))
        assert body['indexes']['count'] == len(files)
        assert sorted(body['indexes']['checksums']) == [f.name for f in files]
        assert body['ready'] is True

    def test_catalog(self, client):
        catalog = client.get('/v1/catalog').json()
        assert [entry['index'] for entry in catalog] == list(range(len(catalog)))
        assert {'head_type', 'relation', 'tail_type'} <= set(catalog[0])
