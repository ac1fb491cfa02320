import random

import pytest
from structlog.testing import capture_logs

from knowledge.graph_store import ingest_triples, load_graph
from knowledge.meta_paths import (
    MetaPath, MetaPathCatalog, catalog_meta_paths, export_catalog, load_catalog,
    parse_meta_path_ids, partition, partition_all
)
from knowledge.synthetic_kg import gen_synthetic_kg, type_sizes
from utils.exceptions import (
    ConfigurationError, GraphConsistencyError, TripleParseError, UnknownMetaPathError
)


class TestIngest:
    def test_empty_input(self):
        kg = ingest_triples([])
        assert len(kg.nodes) == 0
        assert len(kg.edges) == 0

    def test_single_line(self):
        kg = ingest_triples(["d1\tdisease\tFlu\ttreated_by\tm1\tdrug\tOseltamivir"])
        assert len(kg.nodes) == 2
        assert len(kg.edges) == 1
        assert kg.name_of('m1') == 'Oseltamivir'
        assert kg.signature(kg.edges[0]) == ('disease', 'treated_by', 'drug')

    def test_six_fields_names_the_line(self):
        lines = ["d1\tdisease\tFlu\ttreated_by\tm1\tdrug\tOseltamivir",
                 "d2\tdisease\tFever\ttreated_by\tm1\tdrug"]
        with pytest.raises(TripleParseError) as info:
            ingest_triples(lines)
        assert info.value.line == 2

    def test_comments_and_blank_lines_skipped(self):
        kg = ingest_triples(["# header", "", "d1\tdisease\tFlu\ttreated_by\tm1\tdrug\tOseltamivir"])
        assert len(kg.edges) == 1

    def test_type_conflict(self):
        lines = ["d1\tdisease\tFlu\ttreated_by\tm1\tdrug\tOseltamivir",
                 "m1\tdisease\tOseltamivir\ttreated_by\td1\tdisease\tFlu"]
        with pytest.raises(GraphConsistencyError):
            ingest_triples(lines)

    def test_duplicate_edge_dropped_with_warning(self):
        line = "d1\tdisease\tFlu\ttreated_by\tm1\tdrug\tOseltamivir"
        with capture_logs() as logs:
            kg = ingest_triples([line, line])
        assert len(kg.edges) == 1
        assert any(entry['event'] == 'duplicate_edge_dropped' for entry in logs)

    def test_name_conflict_keeps_first(self):
        lines = ["d1\tdisease\tFlu\ttreated_by\tm1\tdrug\tOseltamivir",
                 "d1\tdisease\tInfluenza\ttreated_by\tm2\tdrug\tZanamivir"]
        with capture_logs() as logs:
            kg = ingest_triples(lines)
        assert kg.name_of('d1') == 'Flu'
        assert any(entry['event'] == 'node_name_conflict' for entry in logs)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigurationError):
            load_graph(tmp_path / 'absent.tsv')

    def test_load_graph_file(self, tmp_path):
        path = tmp_path / 'kg.tsv'
        path.write_text('\n'.join(["# header", "d1\tdisease\tFlu\ttreated_by\tm1\tdrug\tOséltamivir"]) + '\n',
                        encoding='utf-8')
        kg = load_graph(path)
        assert kg.name_of('m1') == 'Oséltamivir'

    def test_invalid_utf8_names_the_line(self, tmp_path):
        path = tmp_path / 'kg.tsv'
        path.write_bytes(b"d1\tdisease\tFlu\ttreated_by\tm1\tdrug\tAspirin\n"
                         b"d2\tdisease\tF\xffver\ttreated_by\tm1\tdrug\tAspirin\n")
        with pytest.raises(TripleParseError) as excinfo:
            load_graph(path)
        assert excinfo.value.line == 2



class TestCatalog:
    def test_single_edge_type(self):
        kg = ingest_triples(["d1\tdisease\tFlu\ttreated_by\tm1\tdrug\tOseltamivir"])
        catalog = catalog_meta_paths(kg)
        assert catalog.count == 1
        assert catalog.get(0).triple == ('disease', 'treated_by', 'drug')

    def test_empty_graph(self):
        assert catalog_meta_paths(ingest_triples([])).count == 0

    def test_shared_signature_deduplicated(self):
        kg = ingest_triples(["d1\tdisease\tFlu\ttreated_by\tm1\tdrug\tOseltamivir",
                             "d2\tdisease\tFever\ttreated_by\tm2\tdrug\tAspirin"])
        assert catalog_meta_paths(kg).count == 1

    def test_sorted_and_stable(self, toy_catalog):
        assert [mp.triple for mp in toy_catalog.paths] == [
            ('disease', 'treated_by', 'drug'),
            ('drug', 'drug_protein', 'gene/protein'),
        ]
        assert [mp.index for mp in toy_catalog.paths] == [0, 1]

    def test_export_load(self, toy_catalog):
        assert load_catalog(export_catalog(toy_catalog)) == toy_catalog

    def test_resolve(self, toy_catalog):
        assert toy_catalog.resolve('1').relation == 'drug_protein'
        assert toy_catalog.resolve('drug,drug_protein,gene/protein').index == 1
        with pytest.raises(UnknownMetaPathError) as info:
            toy_catalog.resolve('drug,eats,cake')
        assert 'drug,eats,cake' in info.value.message


class TestPartition:
    def test_drug_protein_partition(self, toy_kg, toy_catalog):
        part = partition(toy_kg, toy_catalog.find(('drug', 'drug_protein', 'gene/protein')))
        assert len(part.edges) == 3
        assert {n.id for n in part.nodes} == {'m1', 'm2', 'g1', 'g2', 'g3'}

    def test_unmatched_meta_path_is_empty(self, toy_kg):
        part = partition(toy_kg, MetaPath(index=9, head_type='gene/protein',
                                          relation='binds', tail_type='drug'))
        assert part.edges == ()
        assert part.nodes == ()

    def test_union_reconstructs_edge_set_once(self):
        kg = ingest_triples(gen_synthetic_kg(seed=1, n_nodes=300))
        catalog = catalog_meta_paths(kg)
        keys = [edge.key for part in partition_all(kg, catalog) for edge in part.edges]
        assert len(keys) == len(set(keys))
        assert set(keys) == {edge.key for edge in kg.edges}

    def test_partition_all_matches_partition(self, toy_kg, toy_catalog):
        for part in partition_all(toy_kg, toy_catalog):
            assert part == partition(toy_kg, part.meta_path)


class TestParseIds:
    @pytest.fixture
    def catalog(self):
        return MetaPathCatalog(paths=tuple(
            MetaPath(index=i, head_type='a', relation=f"r{i}", tail_type='b') for i in range(3)
        ))

    def test_plain_ids(self, catalog):
        selection = parse_meta_path_ids("IDs: 0, 2", catalog)
        assert (selection.correct, selection.erroneous, selection.repeated) == ([0, 2], [], [])

    def test_repeated_and_erroneous(self, catalog):
        selection = parse_meta_path_ids("IDs: 0, 0, 9", catalog)
        assert selection.correct == [0]
        assert selection.repeated == [0]
        assert selection.erroneous == ['9']

    def test_empty(self, catalog):
        selection = parse_meta_path_ids("", catalog)
        assert (selection.correct, selection.erroneous, selection.repeated) == ([], [], [])

    def test_triples_resolve(self, catalog):
        selection = parse_meta_path_ids("('a', 'r1', 'b'), (x, y, z)", catalog)
        assert selection.correct == [1]
        assert selection.erroneous == ['(x, y, z)']

    def test_cap_overflow_is_erroneous(self, catalog):
        selection = parse_meta_path_ids("0, 1, 2", catalog, max_meta_paths=2)
        assert selection.correct == [0, 1]
        assert selection.erroneous == ['2']

    def test_every_token_lands_in_one_bucket(self, catalog):
        rng = random.Random(5)
        for _ in range(200):
            tokens = [str(rng.randrange(6)) for _ in range(rng.randrange(8))]
            selection = parse_meta_path_ids(', '.join(tokens), catalog, max_meta_paths=3)
            total = len(selection.correct) + len(selection.erroneous) + len(selection.repeated)
            assert total == len(tokens)
            assert len(set(selection.correct)) == len(selection.correct) <= 3


class TestSyntheticGraph:
    def test_sizes(self):
        sizes = type_sizes(1000)
        assert sizes == {'disease': 300, 'procedure': 150, 'drug': 300, 'gene/protein': 250}

    def test_seeded(self):
        assert gen_synthetic_kg(seed=4, n_nodes=100) == gen_synthetic_kg(seed=4, n_nodes=100)
        assert gen_synthetic_kg(seed=4, n_nodes=100) != gen_synthetic_kg(seed=5, n_nodes=100)

    def test_every_node_has_an_edge(self):
        kg = ingest_triples(gen_synthetic_kg(seed=0, n_nodes=1000))
        assert len(kg.nodes) == 1000
