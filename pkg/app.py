# Episode Service - HTTP surface of the hierarchical retrieval engine
# Submits prediction episodes and serves their logged trajectories

"""
Endpoints:
- POST /v1/episodes        run an episode (mock providers) or start one (http providers)
- GET  /v1/episodes/{id}   stored trajectory JSON line
- GET  /v1/health          build info, episode count and index checksums
- GET  /v1/catalog         meta-path catalog
"""

import asyncio
import threading
from concurrent.futures import Future, ThreadPoolExecutor
from contextlib import asynccontextmanager
from pathlib import Path
from typing import Any, Dict, Optional

import structlog
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from agents.episode import INTERNAL_ERROR
from agents.state import Trajectory
from config.constants import EngineConstants
from config.settings import EngineConfig, load_config
from data.labels import observed_visits, task_spec
from data.records import PatientRecord
from data.trajectory_store import TrajectoryStore
from runtime import EngineRuntime
from utils.exceptions import EngineError, EpisodeConflict, EpisodeNotFound, ProviderError
from utils.validators import ValidationHelper

logger = structlog.get_logger(__name__)

# Only keys that shape episode behaviour may be overridden per request
OVERRIDABLE_SECTIONS = ('agent.', 'reward.', 'rl.')

STATUS_BY_ERROR = {
    EpisodeNotFound.code: 404,
    EpisodeConflict.code: 409,
    ProviderError.code: 502
}

# Failed episodes that still produce a stored trajectory
FAILED_EPISODE_STATUS = {
    ProviderError.code: 502,
    INTERNAL_ERROR: 500
}


class EpisodeRequest(BaseModel):
    model_config = ConfigDict(extra='forbid')

    task: str
    patient: Optional[PatientRecord] = None
    patient_id: Optional[str] = None
    ordinal: Optional[int] = Field(None, ge=0)
    config: Dict[str, Any] = Field(default_factory=dict)

    @field_validator('task')
    @classmethod
    def _known_task(cls, value: str) -> str:
        kind = value.upper()
        if kind not in EngineConstants.TASK_LABELS:
            raise ValueError(f"task must be one of {sorted(EngineConstants.TASK_LABELS)}")
        return kind

    @field_validator('config')
    @classmethod
    def _overridable(cls, value: Dict[str, Any]) -> Dict[str, Any]:
        for key in value:
            if key != 'seed' and not key.startswith(OVERRIDABLE_SECTIONS):
                raise ValueError(f"config key '{key}' cannot be overridden per episode")
        return value

    @model_validator(mode='after')
    def _patient_given(self) -> 'EpisodeRequest':
        if self.patient is None and not self.patient_id:
            raise ValueError("either patient or patient_id is required")
        return self


class ServiceState:
    """Per-app mutable state: store, worker pool and the ordinal counter"""

    def __init__(self, runtime: EngineRuntime, store: TrajectoryStore):
        self.runtime = runtime
        self.store = store
        self.executor = ThreadPoolExecutor(
            max_workers=runtime.config.service.max_concurrent_episodes,
            thread_name_prefix='episode'
        )
        self.checksums = runtime.index_checksums()
        self._ordinal = len(store)
        self._lock = threading.Lock()

    def next_ordinal(self) -> int:
        with self._lock:
            ordinal = self._ordinal
            self._ordinal += 1
            return ordinal


def _error_response(exc: EngineError) -> JSONResponse:
    status = STATUS_BY_ERROR.get(exc.code, 400 if exc.user_error else 500)
    return JSONResponse(exc.to_dict(), status_code=status)


def _field_messages(exc: RequestValidationError) -> Dict[str, str]:
    messages = {}
    for error in exc.errors():
        loc = [str(part) for part in error['loc'] if part != 'body']
        messages['.'.join(loc) or 'body'] = error['msg']
    return messages


def _reserve(state: ServiceState, request: EpisodeRequest, config: EngineConfig,
             patient_id: str) -> tuple:
    """
    Claim an episode id.

    Explicit ordinals and cohort patients named by id get the same ordinal as
    `cli run` and conflict on reuse; inline patients take the next free counter value.
    """
    task = task_spec(request.task)
    ordinal = request.ordinal
    if ordinal is None and request.patient_id:
        ordinal = state.runtime.cohort_position(request.patient_id)
    if ordinal is not None:
        episode_id = state.runtime.episode_id(task, patient_id, ordinal, config)
        state.store.reserve(episode_id)
        return ordinal, episode_id
    while True:
        ordinal = state.next_ordinal()
        episode_id = state.runtime.episode_id(task, patient_id, ordinal, config)
        try:
            state.store.reserve(episode_id)
            return ordinal, episode_id
        except EpisodeConflict:
            continue


def _store_when_done(state: ServiceState, episode_id: str):
    def callback(future: Future) -> None:
        try:
            trajectory: Trajectory = future.result()
        except Exception:
            logger.exception('episode_crashed', episode_id=episode_id)
            state.store.release(episode_id)
            return
        state.store.put(trajectory)
    return callback


def create_app(config: Optional[EngineConfig] = None,
               runtime: Optional[EngineRuntime] = None) -> FastAPI:
    config = config or (runtime.config if runtime is not None else load_config())
    runtime = runtime or EngineRuntime.from_config(config, strict=False)

    for problem in ValidationHelper(config).validate_engine_config(need_kg=False, need_indexes=False):
        logger.warning('config_problem', problem=problem)

    state = ServiceState(runtime, TrajectoryStore(Path(config.paths.service_trajectories)))

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        logger.info('service_started', provider_mode=config.provider.mode,
                    indexes=len(runtime.indexes), ready=runtime.ready)
        yield
        state.executor.shutdown(wait=False)

    app = FastAPI(title='Hierarchical retrieval engine', version=EngineConstants.VERSION,
                  lifespan=lifespan)
    app.state.service = state

    @app.exception_handler(RequestValidationError)
    async def validation_failed(request: Request, exc: RequestValidationError):
        return JSONResponse({'error': 'validation_error', 'message': 'Invalid request body',
                             'details': {'fields': _field_messages(exc)}}, status_code=400)

    @app.exception_handler(EngineError)
    async def engine_failed(request: Request, exc: EngineError):
        return _error_response(exc)

    @app.post('/v1/episodes')
    async def submit_episode(body: EpisodeRequest):
        if not runtime.ready:
            return JSONResponse({'error': 'not_ready', 'message': 'No catalog loaded; run ingest and index',
                                 'details': {}}, status_code=503)
        episode_config = runtime.config.with_overrides(body.config) if body.config else runtime.config
        task = task_spec(body.task)
        patient = body.patient if body.patient is not None else runtime.patient(body.patient_id)
        observed_visits(task, patient)

        ordinal, episode_id = _reserve(state, body, episode_config, patient.patient_id)
        log = logger.bind(episode_id=episode_id, ordinal=ordinal)

        future = state.executor.submit(runtime.run, task, patient, ordinal, episode_config)
        if config.provider.mode != 'mock':
            future.add_done_callback(_store_when_done(state, episode_id))
            log.info('episode_accepted')
            return JSONResponse({'episode_id': episode_id, 'status': 'running'}, status_code=202)

        try:
            trajectory = await asyncio.wrap_future(future)
        except Exception:
            state.store.release(episode_id)
            raise
        state.store.put(trajectory)
        status = FAILED_EPISODE_STATUS.get(trajectory.error_code, 200)
        return JSONResponse(trajectory.result(), status_code=status)

    @app.get('/v1/episodes/{episode_id}')
    async def get_episode(episode_id: str):
        if state.store.is_pending(episode_id):
            return JSONResponse({'episode_id': episode_id, 'status': 'running'}, status_code=202)
        return Response(content=state.store.get_line(episode_id), media_type='application/json')

    @app.get('/v1/health')
    async def health():
        return {
            'status': 'ok',
            'version': EngineConstants.VERSION,
            'provider_mode': config.provider.mode,
            'ready': runtime.ready,
            'episodes': len(state.store),
            'meta_paths': len(runtime.catalog) if runtime.catalog is not None else 0,
            'indexes': {'count': len(runtime.indexes), 'checksums': state.checksums}
        }

    @app.get('/v1/catalog')
    async def catalog():
        if runtime.catalog is None:
            return []
        return [mp.to_dict() for mp in runtime.catalog.paths]

    return app
