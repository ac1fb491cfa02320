"""
Helper Utilities Module
Episode identifiers, stable JSON rendering and file checksums
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Iterator, List

from config.constants import EngineConstants


def _crockford(value: int, length: int) -> str:
    alphabet = EngineConstants.CROCKFORD_ALPHABET
    chars = []
    for _ in range(length):
        chars.append(alphabet[value & 0x1F])
        value >>= 5
    return ''.join(reversed(chars))


def make_episode_id(seed: int, task_kind: str, patient_id: str, ordinal: int) -> str:
    """
    ULID-shaped, deterministic episode id.

    The first 10 characters encode a 48-bit ordinal (so ids sort by submission
    order); the last 16 encode 80 bits of a digest of the episode inputs.
    """
    if ordinal < 0 or ordinal >= 1 << 48:
        raise ValueError(f"ordinal out of range: {ordinal}")
    digest = hashlib.sha256(f"{seed}|{task_kind}|{patient_id}|{ordinal}".encode('utf-8')).digest()
    entropy = int.from_bytes(digest[:10], 'big')
    return _crockford(ordinal, 10) + _crockford(entropy, 16)


def stable_json(obj: Any) -> str:
    """Compact JSON with insertion key order."""
    return json.dumps(obj, ensure_ascii=False, separators=(',', ':'))


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def iter_jsonl(path: Path) -> Iterator[str]:
    """Yield the non-blank lines of a JSON Lines file, newline stripped."""
    with open(path, 'r', encoding='utf-8') as handle:
        for line in handle:
            line = line.rstrip('\n')
            if line.strip():
                yield line


def read_jsonl(path: Path) -> List[Any]:
    return [json.loads(line) for line in iter_jsonl(path)]
