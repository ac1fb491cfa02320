"""
Synthetic Knowledge Graph Generator
Seeded heterogeneous biomedical graph standing in for a full PrimeKG export.

Node ids for diseases, procedures and drugs use the same code format as the
synthetic cohort (see ``code_id``), so EHR codes resolve to KG names.
"""

from typing import Dict, List, Tuple

import numpy as np

NODE_TYPES = {
    'disease': 'D',
    'procedure': 'P',
    'drug': 'M',
    'gene/protein': 'G'
}

# Share of the node budget given to each type
TYPE_SHARES = {
    'disease': 0.30,
    'procedure': 0.15,
    'drug': 0.30,
    'gene/protein': 0.25
}

RELATIONS: List[Tuple[str, str, str]] = [
    ('disease', 'treated_by', 'drug'),
    ('disease', 'disease_protein', 'gene/protein'),
    ('drug', 'drug_protein', 'gene/protein'),
    ('drug', 'contraindication', 'disease'),
    ('procedure', 'indicated_for', 'disease'),
]

_SYLLABLES = ['ca', 'ro', 'ne', 'li', 'to', 'mi', 'sa', 've', 'du', 'ra',
              'po', 'ki', 'le', 'xa', 'tri', 'mor', 'zol', 'pen', 'cor', 'fa']
_SUFFIX = {
    'disease': 'itis',
    'procedure': 'ectomy',
    'drug': 'mab',
    'gene/protein': 'in'
}


def code_id(node_type: str, index: int) -> str:
    return f"{NODE_TYPES[node_type]}{index:04d}"


def _name(rng: np.random.Generator, node_type: str) -> str:
    parts = rng.choice(_SYLLABLES, size=int(rng.integers(2, 4)))
    return ''.join(parts).capitalize() + _SUFFIX[node_type]


def type_sizes(n_nodes: int) -> Dict[str, int]:
    sizes = {t: max(1, int(n_nodes * share)) for t, share in TYPE_SHARES.items()}
    sizes['gene/protein'] += max(0, n_nodes - sum(sizes.values()))
    return sizes


def gen_synthetic_kg(seed: int = 0, n_nodes: int = 1000, edges_per_node: int = 2) -> List[str]:
    """Return 7-field TSV lines describing a seeded synthetic graph."""
    rng = np.random.default_rng(seed)
    sizes = type_sizes(n_nodes)
    names = {t: [_name(rng, t) for _ in range(sizes[t])] for t in NODE_TYPES}

    lines: List[str] = []
    seen = set()

    def add(head_type: str, head: int, relation: str, tail_type: str, tail: int) -> None:
        key = (head_type, head, relation, tail_type, tail)
        if key in seen:
            return
        seen.add(key)
        lines.append('\t'.join([
            code_id(head_type, head), head_type, names[head_type][head], relation,
            code_id(tail_type, tail), tail_type, names[tail_type][tail]
        ]))

    # Every node takes part in at least one edge so the ingested graph keeps it
    for node_type in NODE_TYPES:
        candidates = [r for r in RELATIONS if node_type in (r[0], r[2])]
        for index in range(sizes[node_type]):
            for _ in range(edges_per_node):
                head_type, relation, tail_type = candidates[int(rng.integers(len(candidates)))]
                if head_type == node_type:
                    add(head_type, index, relation, tail_type, int(rng.integers(sizes[tail_type])))
                else:
                    add(head_type, int(rng.integers(sizes[head_type])), relation, tail_type, index)
    return lines
