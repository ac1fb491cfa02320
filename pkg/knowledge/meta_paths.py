"""
Meta-Path Catalog Module
Meta-path enumeration, per-meta-path partitioning and ID parsing

Features:
- Deterministic catalog of (head_type, relation, tail_type) triples
- Pure subgraph partitions per meta-path
- Tolerant parsing of LLM-emitted meta-path IDs into correct/erroneous/repeated
"""

import json
import re
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple

from knowledge.graph_store import Edge, KnowledgeGraph, Node
from utils.exceptions import UnknownMetaPathError

# A bracketed triple "(a, b, c)" or a bare decimal integer, scanned left to right
_ID_TOKEN = re.compile(r"\(([^(),]*),([^(),]*),([^(),]*)\)|(\d+)")
_QUOTES = ' \t\'"`‘’“”'


@dataclass(frozen=True)
class MetaPath:
    index: int
    head_type: str
    relation: str
    tail_type: str

    @property
    def triple(self) -> Tuple[str, str, str]:
        return (self.head_type, self.relation, self.tail_type)

    def label(self) -> str:
        return f"({self.head_type}, {self.relation}, {self.tail_type})"

    def to_dict(self) -> Dict:
        return {'index': self.index, 'head_type': self.head_type,
                'relation': self.relation, 'tail_type': self.tail_type}


@dataclass(frozen=True)
class MetaPathCatalog:
    paths: Tuple[MetaPath, ...]

    @property
    def count(self) -> int:
        return len(self.paths)

    def __len__(self) -> int:
        return len(self.paths)

    def get(self, index: int) -> MetaPath:
        if not 0 <= index < len(self.paths):
            raise UnknownMetaPathError(f"Meta-path index {index} not in catalog",
                                       details={'meta_path': index})
        return self.paths[index]

    def find(self, triple: Tuple[str, str, str]) -> Optional[MetaPath]:
        for path in self.paths:
            if path.triple == triple:
                return path
        return None

    def resolve(self, name: str) -> MetaPath:
        """Resolve an index ("3") or a triple ("drug,drug_protein,gene/protein")."""
        text = name.strip()
        if text.isdigit():
            return self.get(int(text))
        parts = tuple(p.strip(_QUOTES) for p in text.strip('()').split(','))
        if len(parts) == 3:
            found = self.find(parts)
            if found is not None:
                return found
        raise UnknownMetaPathError(f"Unknown meta-path: {name}", details={'meta_path': name})


@dataclass
class MetaPathSelection:
    """
    Parsed meta-path IDs split into correct / erroneous / repeated.

    Each token of the response lands in exactly one list. ``correct`` never
    holds more than the selection cap; valid IDs past the cap go to
    ``erroneous`` as the raw token.
    """

    correct: List[int] = field(default_factory=list)
    erroneous: List[str] = field(default_factory=list)
    repeated: List[int] = field(default_factory=list)

    def to_dict(self) -> Dict:
        return {'correct': list(self.correct), 'erroneous': list(self.erroneous),
                'repeated': list(self.repeated)}


@dataclass(frozen=True)
class SubgraphPartition:
    meta_path: MetaPath
    nodes: Tuple[Node, ...]
    edges: Tuple[Edge, ...]


def catalog_meta_paths(kg: KnowledgeGraph) -> MetaPathCatalog:
    """One entry per distinct edge signature, sorted lexicographically."""
    signatures = sorted({kg.signature(edge) for edge in kg.edges})
    return MetaPathCatalog(paths=tuple(
        MetaPath(index=i, head_type=h, relation=r, tail_type=t)
        for i, (h, r, t) in enumerate(signatures)
    ))


def _assemble(kg: KnowledgeGraph, mp: MetaPath, edges: Iterable[Edge]) -> SubgraphPartition:
    edges = tuple(edges)
    node_ids: Dict[str, None] = {}
    for edge in edges:
        node_ids.setdefault(edge.head)
        node_ids.setdefault(edge.tail)
    return SubgraphPartition(meta_path=mp, nodes=tuple(kg.node(n) for n in node_ids), edges=edges)


def partition(kg: KnowledgeGraph, mp: MetaPath) -> SubgraphPartition:
    """Edges instantiating ``mp`` plus their endpoints, in graph order."""
    return _assemble(kg, mp, (edge for edge in kg.edges if kg.signature(edge) == mp.triple))


def partition_all(kg: KnowledgeGraph, catalog: MetaPathCatalog) -> List[SubgraphPartition]:
    """All partitions in a single pass over the edges."""
    buckets: Dict[Tuple[str, str, str], List[Edge]] = {mp.triple: [] for mp in catalog.paths}
    for edge in kg.edges:
        signature = kg.signature(edge)
        if signature not in buckets:
            raise UnknownMetaPathError(f"Edge signature {signature} missing from catalog",
                                       details={'edge': edge.key})
        buckets[signature].append(edge)
    return [_assemble(kg, mp, buckets[mp.triple]) for mp in catalog.paths]


def parse_meta_path_ids(text: str, catalog: MetaPathCatalog,
                        max_meta_paths: int = 3) -> MetaPathSelection:
    """
    Classify every ID token found in ``text``.

    Tokens are decimal integers or bracketed triples. A token resolving to a
    catalog entry is correct on first occurrence and repeated afterwards; any
    other token is erroneous. Correct IDs beyond ``max_meta_paths`` cannot be
    honoured and are classified erroneous, so every token lands in a bucket.
    """
    selection = MetaPathSelection()
    seen = set()
    for match in _ID_TOKEN.finditer(text or ''):
        if match.group(4) is not None:
            raw = match.group(4)
            index = int(raw)
            resolved = index if index < catalog.count else None
        else:
            raw = match.group(0)
            triple = tuple(match.group(i).strip(_QUOTES) for i in (1, 2, 3))
            found = catalog.find(triple)
            resolved = found.index if found is not None else None

        if resolved is None:
            selection.erroneous.append(raw)
        elif resolved in seen:
            selection.repeated.append(resolved)
        else:
            seen.add(resolved)
            if len(selection.correct) < max_meta_paths:
                selection.correct.append(resolved)
            else:
                selection.erroneous.append(raw)
    return selection


def export_catalog(catalog: MetaPathCatalog) -> str:
    return json.dumps([mp.to_dict() for mp in catalog.paths], ensure_ascii=False, indent=2)


def load_catalog(text: str) -> MetaPathCatalog:
    entries = json.loads(text)
    paths = tuple(MetaPath(index=e['index'], head_type=e['head_type'],
                           relation=e['relation'], tail_type=e['tail_type']) for e in entries)
    return MetaPathCatalog(paths=paths)
