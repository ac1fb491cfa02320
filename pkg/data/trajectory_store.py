"""
Trajectory Store
Append-serialized JSON Lines persistence of episode trajectories
"""

import threading
from pathlib import Path
from typing import Dict, Iterable, List, Optional

import structlog

from agents.state import Trajectory
from utils.exceptions import ConfigurationError, EpisodeConflict, EpisodeNotFound
from utils.helpers import iter_jsonl

logger = structlog.get_logger(__name__)


def write_trajectories(trajectories: Iterable[Trajectory], path: Path) -> int:
    """Overwrite ``path`` with one trajectory per line."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    count = 0
    with open(path, 'w', encoding='utf-8') as handle:
        for trajectory in trajectories:
            handle.write(trajectory.to_line() + '\n')
            count += 1
    return count


def read_trajectories(path: Path) -> List[Trajectory]:
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"Trajectory file not found: {path}", details={'path': str(path)})
    return [Trajectory.from_line(line) for line in iter_jsonl(path)]


class TrajectoryStore:
    """
    Thread-safe store keyed by episode id.

    Lines are kept exactly as written so reads return the persisted bytes.
    With a path, every accepted trajectory is appended to the file.
    """

    def __init__(self, path: Optional[Path] = None):
        self.path = Path(path) if path else None
        self._lock = threading.Lock()
        self._lines: Dict[str, str] = {}
        if self.path is not None and self.path.is_file():
            for line in iter_jsonl(self.path):
                self._lines[Trajectory.from_line(line).episode_id] = line
            logger.info('trajectory_store_loaded', path=str(self.path), episodes=len(self._lines))

    def __len__(self) -> int:
        with self._lock:
            return len(self._lines)

    def __contains__(self, episode_id: str) -> bool:
        with self._lock:
            return episode_id in self._lines

    def reserve(self, episode_id: str) -> None:
        """Claim an id before the episode runs; a second claim conflicts."""
        with self._lock:
            if episode_id in self._lines:
                raise EpisodeConflict(f"Episode {episode_id} already exists",
                                      details={'episode_id': episode_id})
            self._lines[episode_id] = ''

    def release(self, episode_id: str) -> None:
        with self._lock:
            if self._lines.get(episode_id) == '':
                del self._lines[episode_id]

    def put(self, trajectory: Trajectory) -> str:
        line = trajectory.to_line()
        with self._lock:
            if self._lines.get(trajectory.episode_id):
                raise EpisodeConflict(f"Episode {trajectory.episode_id} already stored",
                                      details={'episode_id': trajectory.episode_id})
            self._lines[trajectory.episode_id] = line
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with open(self.path, 'a', encoding='utf-8') as handle:
                    handle.write(line + '\n')
        return line

    def get_line(self, episode_id: str) -> str:
        """Stored JSON line; pending (reserved) episodes are not found yet."""
        with self._lock:
            line = self._lines.get(episode_id)
        if not line:
            raise EpisodeNotFound(f"Unknown episode: {episode_id}", details={'episode_id': episode_id})
        return line

    def is_pending(self, episode_id: str) -> bool:
        with self._lock:
            return self._lines.get(episode_id) == ''
