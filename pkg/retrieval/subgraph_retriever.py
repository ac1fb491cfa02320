"""
Subgraph Retriever
Partition-restricted Top-N retrieval and prompt serialization of the result

Features:
- Union of top-N nodes and top-N edges over the selected meta-path partitions
- Deduplication by item key with provenance (meta-path, key, score) kept
- Whole-graph retrieval over a merged index
"""

from dataclasses import dataclass, field
from typing import Dict, List, Mapping, NamedTuple, Optional

import structlog

from knowledge.graph_store import Edge, Node
from knowledge.meta_paths import MetaPathSelection
from retrieval.embeddings import EmbeddingProvider, embed
from retrieval.vector_index import PartitionIndex, top_n
from utils.exceptions import RetrievalError

logger = structlog.get_logger(__name__)

# Provenance meta-path value for items found through the merged whole-graph index
WHOLE_GRAPH = -1


class Provenance(NamedTuple):
    meta_path: int
    key: str
    score: float
    kind: str  # 'node' | 'edge'

    def to_dict(self) -> Dict:
        return {'meta_path': self.meta_path, 'key': self.key,
                'score': self.score, 'kind': self.kind}


@dataclass
class RetrievedCorpus:
    nodes: List[Node] = field(default_factory=list)
    edges: List[Edge] = field(default_factory=list)
    provenance: List[Provenance] = field(default_factory=list)
    node_names: Dict[str, str] = field(default_factory=dict)

    def is_empty(self) -> bool:
        return not self.provenance

    def keys(self) -> List[str]:
        return [p.key for p in self.provenance]


class _CorpusBuilder:
    def __init__(self):
        self.corpus = RetrievedCorpus()
        self._seen = set()
        self._nodes: Dict[str, Node] = {}
        self._edges: Dict[str, Edge] = {}

    def absorb(self, meta_path: int, index: PartitionIndex, query, n: int) -> None:
        names = index.node_names()
        nodes_by_key = {node.id: node for node in index.node_items}
        edges_by_key = {edge.key: edge for edge in index.edge_items}

        for match in top_n(index.nodes, query, n):
            if ('node', match.key) in self._seen:
                continue
            self._seen.add(('node', match.key))
            node = nodes_by_key[match.key]
            self.corpus.nodes.append(node)
            self.corpus.node_names[node.id] = node.name
            self.corpus.provenance.append(Provenance(meta_path, match.key, match.score, 'node'))

        for match in top_n(index.edges, query, n):
            if ('edge', match.key) in self._seen:
                continue
            self._seen.add(('edge', match.key))
            edge = edges_by_key[match.key]
            self.corpus.edges.append(edge)
            self.corpus.node_names.setdefault(edge.head, names[edge.head])
            self.corpus.node_names.setdefault(edge.tail, names[edge.tail])
            self.corpus.provenance.append(Provenance(meta_path, match.key, match.score, 'edge'))


def retrieve_subgraph(query_text: str, selection: MetaPathSelection,
                      indexes: Mapping[int, PartitionIndex], n: int,
                      provider: EmbeddingProvider) -> RetrievedCorpus:
    """
    Top-n nodes and top-n edges from each selected partition, in selection order.

    Items already retrieved through an earlier partition are not repeated.
    """
    if not selection.correct:
        return RetrievedCorpus()
    missing = [i for i in selection.correct if i not in indexes]
    if missing:
        raise RetrievalError(f"No index built for meta-path {missing[0]}",
                             details={'meta_path': missing[0]})

    query = embed(query_text, provider)
    builder = _CorpusBuilder()
    for meta_path in selection.correct:
        builder.absorb(meta_path, indexes[meta_path], query, n)
    logger.debug('subgraph_retrieved', partitions=list(selection.correct),
                 items=len(builder.corpus.provenance))
    return builder.corpus


def retrieve_whole_graph(query_text: str, index: Optional[PartitionIndex], n: int,
                         provider: EmbeddingProvider) -> RetrievedCorpus:
    """Top-n nodes and edges over the unpartitioned graph."""
    if index is None:
        raise RetrievalError("No whole-graph index available")
    builder = _CorpusBuilder()
    builder.absorb(WHOLE_GRAPH, index, embed(query_text, provider), n)
    return builder.corpus


def render_item(corpus: RetrievedCorpus, entry: Provenance,
                node_lookup: Mapping[str, Node], edge_lookup: Mapping[str, Edge]) -> str:
    if entry.kind == 'edge':
        edge = edge_lookup[entry.key]
        return (f"({corpus.node_names[edge.head]}) -[{edge.relation}]-> "
                f"({corpus.node_names[edge.tail]})")
    node = node_lookup[entry.key]
    return f"{node.type}: {node.name}"


def serialize_corpus(corpus: RetrievedCorpus) -> str:
    """One line per retrieved item, in provenance order."""
    node_lookup = {node.id: node for node in corpus.nodes}
    edge_lookup = {edge.key: edge for edge in corpus.edges}
    return '\n'.join(render_item(corpus, entry, node_lookup, edge_lookup)
                     for entry in corpus.provenance)
