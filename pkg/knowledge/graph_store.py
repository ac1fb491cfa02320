"""
Knowledge Graph Store
Ingestion of heterogeneous biomedical triples into an immutable graph

Features:
- 7-field TSV triple ingestion with line-numbered parse errors
- Node deduplication by id with type consistency checks
- Immutable graph safe to share across concurrent episodes
"""

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, FrozenSet, Iterable, Iterator, List, Mapping, Tuple

import structlog

from utils.exceptions import ConfigurationError, GraphConsistencyError, TripleParseError

logger = structlog.get_logger(__name__)

TRIPLE_FIELDS = 7


@dataclass(frozen=True)
class Node:
    id: str
    type: str
    name: str

    def __post_init__(self):
        if not self.id:
            raise GraphConsistencyError("Node id must be nonempty")
        if not self.type:
            raise GraphConsistencyError("Node type must be nonempty", details={'node': self.id})


@dataclass(frozen=True)
class Edge:
    head: str
    relation: str
    tail: str

    def __post_init__(self):
        if not self.head or not self.tail:
            raise GraphConsistencyError("Edge endpoints must be nonempty",
                                        details={'relation': self.relation})

    @property
    def key(self) -> str:
        return f"{self.head}|{self.relation}|{self.tail}"


@dataclass(frozen=True)
class KnowledgeGraph:
    """Heterogeneous graph G = (V, E) with its node and edge type sets"""

    nodes: Tuple[Node, ...]
    edges: Tuple[Edge, ...]
    node_types: FrozenSet[str] = frozenset()
    edge_types: FrozenSet[str] = frozenset()
    _by_id: Mapping[str, Node] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        by_id: Dict[str, Node] = {}
        for node in self.nodes:
            if node.id in by_id:
                raise GraphConsistencyError(f"Duplicate node id: {node.id}", details={'node': node.id})
            by_id[node.id] = node
        for edge in self.edges:
            for endpoint in (edge.head, edge.tail):
                if endpoint not in by_id:
                    raise GraphConsistencyError(f"Edge endpoint not in graph: {endpoint}",
                                                details={'edge': edge.key})
        object.__setattr__(self, '_by_id', by_id)
        object.__setattr__(self, 'node_types', frozenset(n.type for n in self.nodes))
        object.__setattr__(self, 'edge_types', frozenset(e.relation for e in self.edges))

    def node(self, node_id: str) -> Node:
        return self._by_id[node_id]

    def name_of(self, node_id: str, default: str = '') -> str:
        node = self._by_id.get(node_id)
        return node.name if node else default

    def signature(self, edge: Edge) -> Tuple[str, str, str]:
        """(head_type, relation, tail_type) of an edge"""
        return (self._by_id[edge.head].type, edge.relation, self._by_id[edge.tail].type)


def _register_node(nodes: Dict[str, Node], node_id: str, node_type: str, name: str,
                   line_no: int) -> None:
    existing = nodes.get(node_id)
    if existing is None:
        nodes[node_id] = Node(id=node_id, type=node_type, name=name)
        return
    if existing.type != node_type:
        raise GraphConsistencyError(
            f"Node {node_id} declared as '{existing.type}' and '{node_type}' (line {line_no})",
            details={'node': node_id, 'types': [existing.type, node_type], 'line': line_no}
        )
    if existing.name != name:
        logger.warning('node_name_conflict', node=node_id, kept=existing.name,
                       ignored=name, line=line_no)


def ingest_triples(reader: Iterable[str]) -> KnowledgeGraph:
    """
    Build a KnowledgeGraph from tab-separated triple lines.

    Each non-comment line carries: head_id, head_type, head_name, relation,
    tail_id, tail_type, tail_name. Lines starting with '#' and blank lines are
    skipped. Identical edges repeated across lines are kept once.
    """
    nodes: Dict[str, Node] = {}
    edges: List[Edge] = []
    seen_edges = set()

    for line_no, raw in enumerate(reader, start=1):
        line = raw.rstrip('\r\n')
        if not line.strip() or line.lstrip().startswith('#'):
            continue
        fields = line.split('\t')
        if len(fields) != TRIPLE_FIELDS:
            raise TripleParseError(
                f"Line {line_no}: expected {TRIPLE_FIELDS} tab-separated fields, got {len(fields)}",
                line=line_no
            )
        head_id, head_type, head_name, relation, tail_id, tail_type, tail_name = (
            f.strip() for f in fields
        )
        if not head_id or not tail_id or not head_type or not tail_type or not relation:
            raise TripleParseError(f"Line {line_no}: empty id, type or relation field", line=line_no)

        _register_node(nodes, head_id, head_type, head_name, line_no)
        _register_node(nodes, tail_id, tail_type, tail_name, line_no)

        edge = Edge(head=head_id, relation=relation, tail=tail_id)
        if edge.key in seen_edges:
            logger.warning('duplicate_edge_dropped', edge=edge.key, line=line_no)
            continue
        seen_edges.add(edge.key)
        edges.append(edge)

    graph = KnowledgeGraph(nodes=tuple(nodes.values()), edges=tuple(edges))
    logger.info('kg_ingested', nodes=len(graph.nodes), edges=len(graph.edges),
                node_types=len(graph.node_types), edge_types=len(graph.edge_types))
    return graph


def load_graph(path) -> KnowledgeGraph:
    if not Path(path).is_file():
        raise ConfigurationError(f"Knowledge graph file not found: {path}", details={'path': str(path)})
    with open(path, 'rb') as handle:
        return ingest_triples(_utf8_lines(handle))


def _utf8_lines(handle) -> Iterator[str]:
    for line_no, raw in enumerate(handle, start=1):
        try:
            yield raw.decode('utf-8')
        except UnicodeDecodeError as exc:
            raise TripleParseError(f"Line {line_no}: not valid UTF-8 ({exc.reason})", line=line_no) from exc
