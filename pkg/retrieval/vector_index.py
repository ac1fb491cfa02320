"""
Flat Vector Index Module
Exact cosine Top-N over per-meta-path partition indexes

Features:
- Exact flat scan (no approximation), ties broken by ascending key
- Node text "type: name", edge text "head_name relation tail_name"
- Byte-deterministic JSON export per partition
"""

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np
import structlog

from knowledge.graph_store import Edge, Node
from knowledge.meta_paths import MetaPath, SubgraphPartition
from retrieval.embeddings import EmbeddingProvider, Vector
from utils.exceptions import ConfigurationError

logger = structlog.get_logger(__name__)


class RankedMatch(NamedTuple):
    key: str
    score: float


@dataclass(frozen=True)
class FlatIndex:
    """Keys with a row-aligned matrix of unit vectors"""

    keys: Tuple[str, ...]
    matrix: np.ndarray
    dim: int

    def __post_init__(self):
        if len(set(self.keys)) != len(self.keys):
            raise ConfigurationError("Index keys must be unique")
        if self.matrix.shape != (len(self.keys), self.dim):
            raise ConfigurationError(
                f"Index matrix shape {self.matrix.shape} does not match "
                f"{len(self.keys)} keys of dim {self.dim}"
            )

    def __len__(self) -> int:
        return len(self.keys)

    def entries(self) -> List[Tuple[str, Vector]]:
        return [(key, self.matrix[i]) for i, key in enumerate(self.keys)]


def top_n(index: FlatIndex, query: Vector, n: int) -> List[RankedMatch]:
    """The n entries most cosine-similar to ``query``; ties by ascending key."""
    if n < 1:
        raise ConfigurationError(f"top_n requires n >= 1, got {n}")
    query = np.asarray(query, dtype=np.float64)
    if query.shape != (index.dim,):
        raise ConfigurationError(
            f"Query dim {query.shape} does not match index dim {index.dim}",
            details={'query_dim': int(query.shape[-1]) if query.ndim else 0, 'index_dim': index.dim}
        )
    if len(index) == 0:
        return []
    norm = np.linalg.norm(query)
    if norm == 0.0:
        similarities = np.zeros(len(index))
    else:
        similarities = index.matrix @ (query / norm)
    order = np.lexsort((np.array(index.keys), -similarities))
    return [RankedMatch(index.keys[i], float(similarities[i])) for i in order[:n]]


@dataclass(frozen=True)
class PartitionIndex:
    meta_path: Optional[MetaPath]
    node_items: Tuple[Node, ...]
    edge_items: Tuple[Edge, ...]
    nodes: FlatIndex
    edges: FlatIndex
    provider: str

    @property
    def dim(self) -> int:
        return self.nodes.dim

    @property
    def node_entries(self) -> List[Tuple[str, Vector]]:
        return self.nodes.entries()

    @property
    def edge_entries(self) -> List[Tuple[str, Vector]]:
        return self.edges.entries()

    def node_names(self) -> Dict[str, str]:
        return {node.id: node.name for node in self.node_items}


def node_text(node: Node) -> str:
    return f"{node.type}: {node.name}"


def edge_text(edge: Edge, names: Dict[str, str]) -> str:
    return f"{names[edge.head]} {edge.relation} {names[edge.tail]}"


def build_index(partition: SubgraphPartition, provider: EmbeddingProvider) -> PartitionIndex:
    """Embed every node and edge of a partition exactly once."""
    names = {node.id: node.name for node in partition.nodes}
    node_vectors = provider.embed_many([node_text(n) for n in partition.nodes])
    edge_vectors = provider.embed_many([edge_text(e, names) for e in partition.edges])
    index = PartitionIndex(
        meta_path=partition.meta_path,
        node_items=tuple(partition.nodes),
        edge_items=tuple(partition.edges),
        nodes=FlatIndex(keys=tuple(n.id for n in partition.nodes),
                        matrix=node_vectors.reshape(len(partition.nodes), provider.dim),
                        dim=provider.dim),
        edges=FlatIndex(keys=tuple(e.key for e in partition.edges),
                        matrix=edge_vectors.reshape(len(partition.edges), provider.dim),
                        dim=provider.dim),
        provider=provider.name
    )
    logger.debug('partition_indexed', meta_path=partition.meta_path.index,
                 nodes=len(index.nodes), edges=len(index.edges))
    return index


def merge_indexes(indexes: Sequence[PartitionIndex]) -> PartitionIndex:
    """Whole-graph index: union of partition entries, nodes deduplicated by id."""
    if not indexes:
        raise ConfigurationError("Cannot merge an empty set of indexes")
    dim = indexes[0].dim
    node_items: Dict[str, Node] = {}
    node_rows: Dict[str, np.ndarray] = {}
    edge_items: List[Edge] = []
    edge_rows: List[np.ndarray] = []
    for index in indexes:
        if index.dim != dim:
            raise ConfigurationError("Indexes disagree on embedding dim")
        for node, (key, vector) in zip(index.node_items, index.node_entries):
            if key not in node_items:
                node_items[key] = node
                node_rows[key] = vector
        for edge, (_, vector) in zip(index.edge_items, index.edge_entries):
            edge_items.append(edge)
            edge_rows.append(vector)
    return PartitionIndex(
        meta_path=None,
        node_items=tuple(node_items.values()),
        edge_items=tuple(edge_items),
        nodes=FlatIndex(keys=tuple(node_items), dim=dim,
                        matrix=np.array(list(node_rows.values())).reshape(len(node_items), dim)),
        edges=FlatIndex(keys=tuple(e.key for e in edge_items), dim=dim,
                        matrix=np.array(edge_rows).reshape(len(edge_items), dim)),
        provider=indexes[0].provider
    )


def export_index(index: PartitionIndex) -> str:
    """Deterministic JSON document for one partition index."""
    names = index.node_names()
    document = {
        'meta_path': index.meta_path.to_dict() if index.meta_path else None,
        'provider': index.provider,
        'dim': index.dim,
        'nodes': [
            {'key': node.id, 'type': node.type, 'name': node.name,
             'vector': index.nodes.matrix[i].tolist()}
            for i, node in enumerate(index.node_items)
        ],
        'edges': [
            {'key': edge.key, 'head': edge.head, 'relation': edge.relation, 'tail': edge.tail,
             'text': edge_text(edge, names), 'vector': index.edges.matrix[i].tolist()}
            for i, edge in enumerate(index.edge_items)
        ]
    }
    return json.dumps(document, ensure_ascii=False, separators=(',', ':'))


def load_index(text: str) -> PartitionIndex:
    document = json.loads(text)
    dim = document['dim']
    mp = document['meta_path']
    node_items = tuple(Node(id=n['key'], type=n['type'], name=n['name']) for n in document['nodes'])
    edge_items = tuple(Edge(head=e['head'], relation=e['relation'], tail=e['tail'])
                       for e in document['edges'])
    return PartitionIndex(
        meta_path=MetaPath(**mp) if mp else None,
        node_items=node_items,
        edge_items=edge_items,
        nodes=FlatIndex(keys=tuple(n.id for n in node_items), dim=dim,
                        matrix=np.array([n['vector'] for n in document['nodes']],
                                        dtype=np.float64).reshape(len(node_items), dim)),
        edges=FlatIndex(keys=tuple(e.key for e in edge_items), dim=dim,
                        matrix=np.array([e['vector'] for e in document['edges']],
                                        dtype=np.float64).reshape(len(edge_items), dim)),
        provider=document['provider']
    )


def index_filename(meta_path: MetaPath) -> str:
    return f"partition_{meta_path.index:04d}.json"


def save_index(index: PartitionIndex, directory: Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    target = directory / index_filename(index.meta_path)
    target.write_text(export_index(index), encoding='utf-8')
    return target


def load_indexes(directory: Path) -> Dict[int, PartitionIndex]:
    """All partition indexes found in ``directory``, keyed by meta-path index."""
    directory = Path(directory)
    indexes: Dict[int, PartitionIndex] = {}
    if not directory.is_dir():
        return indexes
    for path in sorted(directory.glob('partition_*.json')):
        index = load_index(path.read_text(encoding='utf-8'))
        indexes[index.meta_path.index] = index
    return indexes
