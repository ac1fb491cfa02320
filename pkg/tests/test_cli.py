import json

import openpyxl
import pytest

from agents.state import Trajectory
from cli import main
from data.labels import label_of, task_spec
from data.records import read_cohort
from data.trajectory_store import read_trajectories, write_trajectories


def last_json(capsys):
    out = capsys.readouterr().out.strip().splitlines()
    return json.loads(out[-1])


def error_json(capsys):
    return json.loads(capsys.readouterr().err.strip().splitlines()[-1])


@pytest.fixture
def workspace(tmp_path, monkeypatch, capsys):
    """Synthetic KG, catalog, indexes and a 12-patient cohort under the default store paths."""
    monkeypatch.chdir(tmp_path)
    assert main(['kg', '--nodes', '200', '--seed', '1']) == 0
    assert main(['ingest']) == 0
    assert main(['index']) == 0
    assert main(['cohort', '--out', 'cohort.jsonl', '--patients', '12', '--seed', '3']) == 0
    capsys.readouterr()
    return tmp_path


def four_example_file(path):
    task = task_spec('READ')
    pairs = [('yes', 'yes'), ('yes', 'no'), ('no', 'no'), ('no', 'no')]
    trajectories = [
        Trajectory(episode_id=f"E{i}", task=task, patient_id=f"P{i}", seed=7, config={},
                   initial_query='q', final_prediction=label_of(task, pred),
                   gold=label_of(task, gold), answer_format=True)
        for i, (gold, pred) in enumerate(pairs)
    ]
    trajectories.append(Trajectory(episode_id='E9', status='failed', error='boom',
                                   error_code='provider_error', task=task, patient_id='P9',
                                   seed=7, config={}, initial_query='q'))
    write_trajectories(trajectories, path)
    return path


class TestBuildCommands:
    def test_kg_and_ingest(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        assert main(['kg', '--out', 'graph.tsv', '--nodes', '100']) == 0
        assert last_json(capsys)['triples'] > 0
        assert main(['ingest', '--kg', 'graph.tsv', '--catalog', 'cat.json']) == 0
        summary = last_json(capsys)
        assert summary['nodes'] == 100
        assert summary['meta_paths'] >= 1
        assert (tmp_path / 'cat.json').is_file()

    def test_index_writes_one_file_per_meta_path(self, workspace):
        catalog = json.loads((workspace / 'store' / 'catalog.json').read_text(encoding='utf-8'))
        files = sorted((workspace / 'store' / 'indexes').glob('partition_*.json'))
        assert len(files) == len(catalog)

    def test_index_single_meta_path(self, workspace, capsys):
        assert main(['index', '--meta-path', '0', '--indexes-dir', 'only']) == 0
        assert len(last_json(capsys)['indexed']) == 1
        assert len(list((workspace / 'only').glob('partition_*.json'))) == 1

    def test_unknown_meta_path(self, workspace, capsys):
        assert main(['index', '--meta-path', 'drug,eats,cake']) == 1
        error = error_json(capsys)
        assert error['error'] == 'unknown_meta_path'
        assert 'drug,eats,cake' in error['message']

    def test_missing_kg(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        assert main(['ingest']) == 1
        assert error_json(capsys)['error'] == 'configuration_error'

    def test_undecodable_kg_is_user_error(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        (tmp_path / 'bad.tsv').write_bytes(b"d1\tdisease\t\xe9t\xe9\ttreated_by\tm1\tdrug\tAspirin\n")
        assert main(['ingest', '--kg', 'bad.tsv']) == 1
        error = error_json(capsys)
        assert error['error'] == 'triple_parse_error'
        assert error['details']['line'] == 1

    def test_index_with_foreign_catalog(self, workspace, capsys):
        (workspace / 'other.json').write_text(
            '[{"index": 0, "head_type": "drug", "relation": "eats", "tail_type": "cake"}]',
            encoding='utf-8')
        assert main(['index', '--catalog', 'other.json', '--indexes-dir', 'other']) == 1
        assert error_json(capsys)['error'] == 'unknown_meta_path'

    def test_cohort_split(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        assert main(['cohort', '--out', 'c.jsonl', '--patients', '30', '--split']) == 0
        written = last_json(capsys)['patients']
        assert written['train'] + written['val'] + written['test'] == written['all'] == 30
        assert len(read_cohort(tmp_path / 'c.train.jsonl')) == written['train']


class TestRun:
    def test_two_runs_byte_identical(self, workspace, capsys):
        assert main(['run', '--cohort', 'cohort.jsonl', '--task', 'DEC', '--out', 'a.jsonl']) == 0
        summary = last_json(capsys)
        assert summary['episodes'] == 12 and summary['failed'] == 0
        assert main(['run', '--cohort', 'cohort.jsonl', '--task', 'DEC', '--out', 'b.jsonl',
                     '--workers', '1']) == 0
        assert (workspace / 'a.jsonl').read_bytes() == (workspace / 'b.jsonl').read_bytes()

    def test_order_follows_cohort(self, workspace):
        assert main(['run', '--cohort', 'cohort.jsonl', '--task', 'LOS', '--limit', '5']) == 0
        trajectories = read_trajectories(workspace / 'store' / 'trajectories.jsonl')
        cohort = read_cohort(workspace / 'cohort.jsonl')
        assert [t.patient_id for t in trajectories] == [e.patient.patient_id for e in cohort[:5]]
        ids = [t.episode_id for t in trajectories]
        assert ids == sorted(ids)

    def test_read_skips_single_visit_patients(self, workspace, capsys):
        assert main(['run', '--cohort', 'cohort.jsonl', '--task', 'READ']) == 0
        summary = last_json(capsys)
        single = sum(len(e.patient.visits) < 2 for e in read_cohort(workspace / 'cohort.jsonl'))
        assert summary['skipped'] == single
        assert summary['episodes'] == 12 - single

    def test_agent_flags_reach_snapshot(self, workspace):
        assert main(['run', '--cohort', 'cohort.jsonl', '--task', 'DEC', '--limit', '1',
                     '--max-iterations', '2', '--ablation', 'NL', '--seed', '11']) == 0
        trajectory = read_trajectories(workspace / 'store' / 'trajectories.jsonl')[0]
        assert trajectory.config['agent']['max_iterations'] == 2
        assert trajectory.config['agent']['ablation'] == 'NL'
        assert trajectory.seed == 11

    def test_run_without_store(self, tmp_path, monkeypatch, capsys):
        monkeypatch.chdir(tmp_path)
        (tmp_path / 'cohort.jsonl').write_text('', encoding='utf-8')
        assert main(['run', '--cohort', 'cohort.jsonl', '--task', 'DEC']) == 1
        assert error_json(capsys)['details']['problems']

    def test_usage_error(self, capsys):
        assert main(['run', '--task', 'DEC']) == 1
        assert error_json(capsys)['error'] == 'configuration_error'

    def test_bad_override(self, workspace, capsys):
        assert main(['--set', 'agent.nothing=3', 'run', '--cohort', 'cohort.jsonl',
                     '--task', 'DEC']) == 1
        assert error_json(capsys)['details']['key'] == 'agent.nothing'


class TestEval:
    def test_four_examples(self, tmp_path, capsys):
        path = four_example_file(tmp_path / 't.jsonl')
        assert main(['eval', '--trajectories', str(path)]) == 0
        result = last_json(capsys)
        assert result['metrics']['accuracy'] == pytest.approx(0.75)
        assert result['metrics']['balanced_accuracy'] == pytest.approx(0.75)
        assert result['metrics']['macro_f1'] == pytest.approx(11 / 15)
        assert result['metrics']['n'] == 4
        assert result['excluded'] == 1

    def test_groups_and_workbook(self, workspace, capsys):
        assert main(['run', '--cohort', 'cohort.jsonl', '--task', 'DEC']) == 0
        assert main(['eval', '--cohort', 'cohort.jsonl', '--xlsx', 'report.xlsx']) == 0
        result = last_json(capsys)
        assert sorted(result['groups']) == ['G1', 'G2', 'G3']
        assert sum(g['n'] for g in result['groups'].values()) == result['metrics']['n'] == 12
        assert 'Rarity Groups' in openpyxl.load_workbook(workspace / 'report.xlsx').sheetnames

    def test_single_group(self, workspace, capsys):
        assert main(['run', '--cohort', 'cohort.jsonl', '--task', 'DEC']) == 0
        assert main(['eval', '--cohort', 'cohort.jsonl', '--group', 'G1']) == 0
        result = last_json(capsys)
        assert result['group'] == 'G1'
        assert 'groups' not in result

    def test_group_without_cohort(self, tmp_path, capsys):
        path = four_example_file(tmp_path / 't.jsonl')
        assert main(['eval', '--trajectories', str(path), '--group', 'G1']) == 1


class TestScoreAndReplay:
    def test_score(self, workspace, capsys):
        assert main(['run', '--cohort', 'cohort.jsonl', '--task', 'DEC', '--limit', '4']) == 0
        assert main(['score', '--out', 'scores.jsonl', '--normalization', 'none']) == 0
        assert last_json(capsys)['scored'] == 4
        rows = [json.loads(line) for line in
                (workspace / 'scores.jsonl').read_text(encoding='utf-8').splitlines()]
        assert len(rows) == 4
        for row in rows:
            assert len(row['advantages']) == len(row['returns']) == len(row['rewards'])
            assert row['total_loss'] == pytest.approx(-row['actor_objective'] + row['critic_loss'])

    def test_score_reports_unscorable(self, tmp_path, capsys):
        path = four_example_file(tmp_path / 't.jsonl')
        assert main(['score', '--trajectories', str(path), '--out', str(tmp_path / 's.jsonl')]) == 0
        assert last_json(capsys)['unscorable'] == 5

    def test_replay(self, workspace, capsys):
        assert main(['run', '--cohort', 'cohort.jsonl', '--task', 'DEC', '--limit', '1']) == 0
        episode_id = read_trajectories(workspace / 'store' / 'trajectories.jsonl')[0].episode_id
        capsys.readouterr()
        assert main(['replay', '--episode', episode_id, '--prompts']) == 0
        out = capsys.readouterr().out
        assert episode_id in out
        assert '>> finalize' in out

    def test_replay_unknown(self, workspace, capsys):
        assert main(['run', '--cohort', 'cohort.jsonl', '--task', 'DEC', '--limit', '1']) == 0
        assert main(['replay', '--episode', 'NOPE']) == 1
        assert error_json(capsys)['error'] == 'episode_not_found'
