"""
Command Line Interface
Operator commands for the retrieval engine

Commands:
- kg, cohort: write synthetic knowledge graph / cohort files
- ingest, index: build the meta-path catalog and partition indexes
- run, eval, score, replay: run episodes and inspect their trajectories
- serve: start the HTTP service

Every failure prints one JSON error object on stderr. Exit codes are 0 on
success, 1 for user errors and 2 for anything else.
"""

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import structlog

from calculations.rl_math import RLConfig, TrajectoryScorer
from config.constants import EngineConstants
from config.settings import EngineConfig, load_config, parse_override
from data.cohort import CohortSpec, gen_synthetic_cohort, split_cohort
from data.labels import observed_visits, task_spec
from data.records import read_cohort, write_cohort
from data.trajectory_store import read_trajectories, write_trajectories
from knowledge.graph_store import load_graph
from knowledge.meta_paths import (
    catalog_meta_paths, export_catalog, load_catalog, partition, partition_all
)
from knowledge.synthetic_kg import gen_synthetic_kg
from reporting.excel_export import ExcelExporter
from reporting.metrics import RARITY_GROUPS, metrics, metrics_by_group, rarity_groups
from reporting.replay import render_replay
from retrieval.vector_index import build_index, save_index
from runtime import EngineRuntime, build_embedder
from utils.exceptions import ConfigurationError, EngineError, EpisodeNotFound, NotLabelableError
from utils.helpers import stable_json
from utils.logging_setup import configure_logging
from utils.validators import ValidationHelper

logger = structlog.get_logger(__name__)

EXIT = EngineConstants.EXIT_CODES

# Command-line flags that stand for config keys
FLAG_KEYS = {
    'kg': 'paths.kg',
    'catalog': 'paths.catalog',
    'indexes_dir': 'paths.indexes_dir',
    'trajectories': 'paths.trajectories',
    'references': 'paths.references',
    'mock_script': 'paths.mock_script',
    'seed': 'seed',
    'rewrites': 'agent.rewrites',
    'top_n': 'agent.top_n',
    'max_iterations': 'agent.max_iterations',
    'max_meta_paths': 'agent.max_meta_paths',
    'ablation': 'agent.ablation',
    'normalization': 'reward.normalization',
    'host': 'service.host',
    'port': 'service.port',
    'workers': 'service.max_concurrent_episodes'
}


class _Parser(argparse.ArgumentParser):
    """Usage errors become user errors instead of argparse's own exit."""

    def error(self, message: str):
        raise ConfigurationError(message, details={'usage': self.format_usage().strip()})


def _emit(payload: Dict[str, Any]) -> None:
    print(stable_json(payload))


def _flag_overrides(args: argparse.Namespace) -> Dict[str, Any]:
    values = vars(args)
    return {key: values[flag] for flag, key in FLAG_KEYS.items() if values.get(flag) is not None}


def cmd_kg(args: argparse.Namespace, config: EngineConfig) -> int:
    lines = gen_synthetic_kg(seed=args.kg_seed, n_nodes=args.nodes,
                             edges_per_node=args.edges_per_node)
    out = Path(args.out or config.paths.kg)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text('\n'.join(lines) + '\n', encoding='utf-8')
    _emit({'kg': str(out), 'triples': len(lines)})
    return EXIT['success']


def cmd_cohort(args: argparse.Namespace, config: EngineConfig) -> int:
    spec = CohortSpec(seed=args.cohort_seed, n_patients=args.patients)
    entries = gen_synthetic_cohort(spec)
    out = Path(args.out)
    written = {'all': write_cohort(entries, out)}
    if args.split:
        ratios = tuple(float(r) for r in args.ratios.split(','))
        for name, part in split_cohort(entries, ratios).items():
            written[name] = write_cohort(part, out.with_name(f"{out.stem}.{name}{out.suffix}"))
    _emit({'cohort': str(out), 'patients': written})
    return EXIT['success']


def cmd_ingest(args: argparse.Namespace, config: EngineConfig) -> int:
    kg = load_graph(config.paths.kg)
    catalog = catalog_meta_paths(kg)
    target = Path(config.paths.catalog)
    target.parent.mkdir(parents=True, exist_ok=True)
    target.write_text(export_catalog(catalog), encoding='utf-8')
    _emit({'nodes': len(kg.nodes), 'edges': len(kg.edges), 'meta_paths': len(catalog),
           'catalog': str(target)})
    return EXIT['success']


def cmd_index(args: argparse.Namespace, config: EngineConfig) -> int:
    kg = load_graph(config.paths.kg)
    catalog_path = Path(config.paths.catalog)
    if catalog_path.is_file():
        catalog = load_catalog(catalog_path.read_text(encoding='utf-8'))
    else:
        catalog = catalog_meta_paths(kg)
        catalog_path.parent.mkdir(parents=True, exist_ok=True)
        catalog_path.write_text(export_catalog(catalog), encoding='utf-8')

    # Resolve every name before embedding anything
    if args.meta_path:
        parts = [partition(kg, catalog.resolve(name)) for name in args.meta_path]
    else:
        parts = partition_all(kg, catalog)

    embedder = build_embedder(config)
    written = []
    for part in parts:
        mp = part.meta_path
        path = save_index(build_index(part, embedder), Path(config.paths.indexes_dir))
        logger.info('index_written', meta_path=mp.index, path=str(path))
        written.append(mp.label())
    _emit({'indexed': written, 'indexes_dir': config.paths.indexes_dir, 'provider': embedder.name})
    return EXIT['success']


def cmd_run(args: argparse.Namespace, config: EngineConfig) -> int:
    task = task_spec(args.task)
    problems = ValidationHelper(config).validate_engine_config()
    if problems:
        raise ConfigurationError("Engine configuration is incomplete", details={'problems': problems})
    runtime = EngineRuntime.from_config(config)
    entries = read_cohort(Path(args.cohort))
    if args.limit is not None:
        entries = entries[:args.limit]

    # The ordinal is the line position in the cohort file
    jobs = []
    skipped = 0
    for ordinal, entry in enumerate(entries):
        try:
            observed_visits(task, entry.patient)
        except NotLabelableError:
            skipped += 1
            logger.info('patient_skipped', patient_id=entry.patient.patient_id, task=task.kind)
            continue
        jobs.append((ordinal, entry.patient))

    with ThreadPoolExecutor(max_workers=config.service.max_concurrent_episodes) as pool:
        trajectories = list(pool.map(lambda job: runtime.run(task, job[1], job[0]), jobs))

    out = Path(config.paths.trajectories)
    write_trajectories(trajectories, out)
    failed = sum(1 for t in trajectories if t.status == 'failed')
    _emit({'episodes': len(trajectories), 'completed': len(trajectories) - failed,
           'failed': failed, 'skipped': skipped, 'trajectories': str(out)})
    return EXIT['success']


def cmd_eval(args: argparse.Namespace, config: EngineConfig) -> int:
    trajectories = read_trajectories(Path(config.paths.trajectories))
    kinds = sorted({t.task.kind for t in trajectories})
    if args.task:
        kind = args.task.upper()
    elif len(kinds) == 1:
        kind = kinds[0]
    else:
        raise ConfigurationError("Trajectories mix several tasks; pass --task",
                                 details={'tasks': kinds})
    task = task_spec(kind)

    scored = [t for t in trajectories if t.task.kind == task.kind and t.status == 'completed'
              and t.final_prediction is not None and t.gold is not None]
    excluded = sum(1 for t in trajectories if t.task.kind == task.kind) - len(scored)

    groups: Optional[Dict[str, str]] = None
    if args.cohort:
        groups = rarity_groups([entry.patient for entry in read_cohort(Path(args.cohort))])
    elif args.group:
        raise ConfigurationError("--group needs --cohort to compute rarity groups")
    if args.group:
        scored = [t for t in scored if groups.get(t.patient_id) == args.group]

    predictions = [t.final_prediction for t in scored]
    gold = [t.gold for t in scored]
    report = metrics(predictions, gold, task)
    per_group = None
    if groups is not None and not args.group:
        per_group = metrics_by_group(predictions, gold, [t.patient_id for t in scored], groups, task)

    result: Dict[str, Any] = {'metrics': report.to_dict(), 'excluded': excluded}
    if args.group:
        result['group'] = args.group
    if per_group is not None:
        result['groups'] = {name: r.to_dict() for name, r in per_group.items()}
    if args.xlsx:
        Path(args.xlsx).write_bytes(ExcelExporter().export_metrics(report, per_group))
        result['xlsx'] = args.xlsx
    _emit(result)
    return EXIT['success']


def cmd_score(args: argparse.Namespace, config: EngineConfig) -> int:
    trajectories = read_trajectories(Path(config.paths.trajectories))
    scorer = TrajectoryScorer(RLConfig.from_section(config.rl), config.reward.normalization)
    rows = scorer.score_batch(trajectories)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, 'w', encoding='utf-8') as handle:
        for row in rows:
            handle.write(stable_json(row) + '\n')
    unscorable = sum(1 for row in rows if not row['scorable'])
    _emit({'scored': len(rows) - unscorable, 'unscorable': unscorable, 'scores': str(out)})
    return EXIT['success']


def cmd_replay(args: argparse.Namespace, config: EngineConfig) -> int:
    for trajectory in read_trajectories(Path(config.paths.trajectories)):
        if trajectory.episode_id == args.episode:
            print(render_replay(trajectory, show_prompts=args.prompts))
            return EXIT['success']
    raise EpisodeNotFound(f"Unknown episode: {args.episode}", details={'episode_id': args.episode})


def cmd_serve(args: argparse.Namespace, config: EngineConfig) -> int:
    import uvicorn

    from app import create_app

    uvicorn.run(create_app(config), host=config.service.host, port=config.service.port,
                log_config=None)
    return EXIT['success']


def _agent_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument('--seed', type=int)
    parser.add_argument('--rewrites', type=int, help='K, rewritten queries per episode')
    parser.add_argument('--top-n', dest='top_n', type=int, help='N, items per partition')
    parser.add_argument('--max-iterations', dest='max_iterations', type=int, help='I')
    parser.add_argument('--max-meta-paths', dest='max_meta_paths', type=int)
    parser.add_argument('--ablation', choices=EngineConstants.ABLATIONS)
    parser.add_argument('--mock-script', dest='mock_script')
    parser.add_argument('--references')


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog='ghar', description='Hierarchical agentic retrieval engine')
    parser.add_argument('--config', help='JSON config file (default: $GHAR_CONFIG)')
    parser.add_argument('--set', dest='overrides', action='append', default=[],
                        metavar='KEY=VALUE', help='Dotted config override, repeatable')
    parser.add_argument('--log-level', default='INFO')
    parser.add_argument('--json-logs', action='store_true')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('kg', help='Write a synthetic knowledge graph TSV')
    p.add_argument('--out')
    p.add_argument('--nodes', type=int, default=1000)
    p.add_argument('--edges-per-node', dest='edges_per_node', type=int, default=2)
    p.add_argument('--seed', dest='kg_seed', type=int, default=0)
    p.set_defaults(handler=cmd_kg)

    p = sub.add_parser('cohort', help='Write a synthetic patient cohort')
    p.add_argument('--out', required=True)
    p.add_argument('--patients', type=int, default=100)
    p.add_argument('--seed', dest='cohort_seed', type=int, default=0)
    p.add_argument('--split', action='store_true', help='Also write train/val/test files')
    p.add_argument('--ratios', default='0.6,0.2,0.2')
    p.set_defaults(handler=cmd_cohort)

    p = sub.add_parser('ingest', help='Ingest triples and export the meta-path catalog')
    p.add_argument('--kg')
    p.add_argument('--catalog')
    p.set_defaults(handler=cmd_ingest)

    p = sub.add_parser('index', help='Build partition indexes')
    p.add_argument('--kg')
    p.add_argument('--catalog')
    p.add_argument('--indexes-dir', dest='indexes_dir')
    p.add_argument('--meta-path', dest='meta_path', action='append', default=[],
                   help='Index number or "head,relation,tail"; repeatable')
    p.set_defaults(handler=cmd_index)

    p = sub.add_parser('run', help='Run episodes over a cohort file')
    p.add_argument('--cohort', required=True)
    p.add_argument('--task', required=True)
    p.add_argument('--out', dest='trajectories')
    p.add_argument('--limit', type=int)
    p.add_argument('--workers', type=int)
    _agent_flags(p)
    p.set_defaults(handler=cmd_run)

    p = sub.add_parser('eval', help='Metrics over trajectories')
    p.add_argument('--trajectories')
    p.add_argument('--task')
    p.add_argument('--cohort', help='Cohort file for rarity groups')
    p.add_argument('--group', choices=RARITY_GROUPS)
    p.add_argument('--xlsx', help='Also write an Excel report')
    p.set_defaults(handler=cmd_eval)

    p = sub.add_parser('score', help='Advantages, returns and losses per trajectory')
    p.add_argument('--trajectories')
    p.add_argument('--out', required=True)
    p.add_argument('--normalization', choices=EngineConstants.NORMALIZATION_MODES)
    p.set_defaults(handler=cmd_score)

    p = sub.add_parser('replay', help='Pretty-print one episode')
    p.add_argument('--trajectories')
    p.add_argument('--episode', required=True)
    p.add_argument('--prompts', action='store_true', help='Show every prompt and response')
    p.set_defaults(handler=cmd_replay)

    p = sub.add_parser('serve', help='Start the HTTP service')
    p.add_argument('--host')
    p.add_argument('--port', type=int)
    p.set_defaults(handler=cmd_serve)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    raw: List[str] = list(sys.argv[1:] if argv is None else argv)
    try:
        args = build_parser().parse_args(raw)
        configure_logging(args.log_level, args.json_logs)
        overrides = dict(parse_override(item) for item in args.overrides)
        overrides.update(_flag_overrides(args))
        config = load_config(args.config, overrides)
        return args.handler(args, config)
    except EngineError as exc:
        print(json.dumps(exc.to_dict(), ensure_ascii=False), file=sys.stderr)
        return EXIT['user_error'] if exc.user_error else EXIT['internal_error']
    except Exception as exc:
        logger.exception('command_failed')
        print(json.dumps({'error': 'internal_error', 'message': str(exc), 'details': {}}),
              file=sys.stderr)
        return EXIT['internal_error']


if __name__ == '__main__':
    sys.exit(main())
