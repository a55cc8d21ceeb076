#!/usr/bin/env python3
import argparse
import json
import logging
import sys
from dataclasses import fields, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Type

from bench import run_bench
from driver import ColumnGenerationDriver, extract_valid_edges, write_trajectory_csv
from env_config import EnvironmentConfig
from error_handler import setup_error_handler
from gnn.checkpoint import read_model, write_model
from graph import parse_instance, serialize_instance
from instgen import generate
from label_store import LabelStore
from models import GenConfig, ReductionConfig, SolveMode, SolverConfig, TrainConfig
from reduce import predict_valid_edges, recall_at, write_scores_csv
from trainer import build_dataset, train
from ui.console_ui import ConsoleUI

INSTANCE_SUFFIX = ".rcsp"
CONFIG_SECTIONS = {
    'generator': GenConfig,
    'solver': SolverConfig,
    'reduction': ReductionConfig,
    'training': TrainConfig,
}


def setup_logging(log_dir: str = "logs", level: str = "INFO"):
    """Setup logging configuration"""
    log_dir = Path(log_dir)
    log_dir.mkdir(parents=True, exist_ok=True)

    logging.basicConfig(
        level=getattr(logging, level.upper(), logging.INFO),
        format='%(asctime)s - %(levelname)s - %(message)s',
        handlers=[
            logging.FileHandler(log_dir / "duty_sieve.log"),
            logging.StreamHandler(sys.stdout)
        ]
    )
    return logging.getLogger(__name__)


def load_settings(path: Optional[str]) -> Dict[str, Dict[str, Any]]:
    """Read the JSON settings file; every section is optional."""
    if not path:
        return {}
    with open(path) as f:
        data = json.load(f)
    unknown = set(data) - set(CONFIG_SECTIONS)
    if unknown:
        raise ValueError(f"{path}: unknown config sections {sorted(unknown)}")
    for section, cls in CONFIG_SECTIONS.items():
        names = {f.name for f in fields(cls)}
        bad = set(data.get(section, {})) - names
        if bad:
            raise ValueError(f"{path}: unknown keys in '{section}': {sorted(bad)}")
    return data


def build_config(cls: Type, section: Dict[str, Any], env_defaults: Dict[str, Any],
                 flags: Dict[str, Any]):
    """Dataclass defaults < environment < JSON section < command-line flags."""
    values: Dict[str, Any] = {}
    names = {f.name for f in fields(cls)}
    for source in (env_defaults, section, flags):
        for key, value in source.items():
            if key in names and value is not None:
                values[key] = tuple(value) if isinstance(value, list) else value
    config = cls(**values)
    config.validate()
    return config


def resolve_instances(paths: Sequence[str]) -> List[str]:
    """Expand directories to their instance files, sorted by name."""
    found: List[str] = []
    for p in map(Path, paths):
        if p.is_dir():
            found += [str(x) for x in sorted(p.glob(f"*{INSTANCE_SUFFIX}"))]
        elif p.exists():
            found.append(str(p))
        else:
            raise FileNotFoundError(f"No such instance file or directory: {p}")
    if not found:
        raise FileNotFoundError(f"No {INSTANCE_SUFFIX} instances under {', '.join(paths)}")
    return found


def cmd_generate(args, settings, env, ui) -> int:
    base = build_config(GenConfig, settings.get('generator', {}), {}, {'seed': args.seed})
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = []
    for i in range(args.count):
        cfg = replace(base, seed=base.seed + i)
        if args.scale and args.scale != 1.0:
            cfg = cfg.scaled(args.scale)
        g = generate(cfg)
        path = out / f"instance_{cfg.seed:05d}{INSTANCE_SUFFIX}"
        path.write_bytes(serialize_instance(g))
        rows.append({'file': path.name, 'seed': cfg.seed, 'nodes': len(g.nodes),
                     'edges': len(g.edges), 'connections': len(g.connection_edge_ids)})
    logging.getLogger(__name__).info(f"Generated {len(rows)} instances in {out}")
    ui.display_instances(rows)
    return 0


def cmd_label(args, settings, env, ui) -> int:
    solver = build_config(SolverConfig, settings.get('solver', {}),
                          {'ip_time_limit': env['ip_time_limit']}, {})
    instances = resolve_instances(args.instances)
    workers = args.workers or env['workers']
    dataset = build_dataset(instances, args.out, workers=workers, cfg=solver)
    failed = len(instances) - len(dataset)
    if failed:
        ui.display_error(f"{failed} of {len(instances)} instances could not be labeled; see the log")
    ui.display_success(f"Labeled {len(dataset)} of {len(instances)} instances", args.out)
    return 0


def cmd_train(args, settings, env, ui) -> int:
    flags = {
        'epochs': args.epochs, 'lr': args.lr, 'batch_graphs': args.batch_graphs,
        'h_conv': args.hidden, 'h_mlp': args.hidden, 'l_conv': args.l_conv, 'l_mlp': args.l_mlp,
        'w_neg': args.w_neg, 'seed': args.seed, 'patience': args.patience,
        'shuffle_labels': True if args.shuffle_labels else None,
    }
    cfg = build_config(TrainConfig, settings.get('training', {}), {}, flags)
    dataset = LabelStore.from_dir(args.data)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    log_path = Path(args.log) if args.log else out.with_suffix(".log.csv")
    result = train(dataset, cfg, ui=ui, log_path=log_path)
    write_model(out, result.model)
    ui.display_success(f"Best model from epoch {result.best_epoch}", str(out))
    return 0


def _reduction(settings, env, args) -> ReductionConfig:
    flags = {'threshold': args.threshold}
    if getattr(args, 'no_guard', False):
        flags['connectivity_guard'] = False
    return build_config(ReductionConfig, settings.get('reduction', {}),
                        {'threshold': env['threshold']}, flags)


def cmd_solve(args, settings, env, ui) -> int:
    solver = build_config(SolverConfig, settings.get('solver', {}),
                          {'ip_time_limit': env['ip_time_limit']}, {})
    reduction = _reduction(settings, env, args)
    model = read_model(args.model) if args.model else None
    g = parse_instance(Path(args.instance).read_bytes())
    driver = ColumnGenerationDriver(solver, model, reduction, ui=ui)
    report, solution = driver.run(g, SolveMode(args.mode))
    if args.log:
        write_trajectory_csv(Path(args.log), report)
    if args.report:
        Path(args.report).write_text(json.dumps(report.to_dict(), indent=2))
    if args.scores:
        # labels are the connections the integer solution uses
        scores = predict_valid_edges(model, g)
        labels = extract_valid_edges(g, solution)
        write_scores_csv(Path(args.scores), g, scores, labels)
        logging.getLogger(__name__).info(
            f"Wrote {len(labels)} edge scores to {args.scores}; recall at {reduction.threshold}: "
            f"{recall_at(scores.p, labels, reduction.threshold):.3f}"
        )
    return 0


def cmd_bench(args, settings, env, ui) -> int:
    solver = build_config(SolverConfig, settings.get('solver', {}),
                          {'ip_time_limit': env['ip_time_limit']}, {})
    reduction = _reduction(settings, env, args)
    modes = _parse_modes(args.modes)
    model = read_model(args.model) if args.model else None
    report_path = Path(args.report)
    report_path.parent.mkdir(parents=True, exist_ok=True)
    trajectory_dir = report_path.with_name(f"{report_path.stem}_trajectories")
    report = run_bench(resolve_instances(args.instances), modes, model, solver, reduction,
                       workers=args.workers or env['workers'], trajectory_dir=trajectory_dir)
    summary_path = report.write(report_path)
    summary = report.summary()
    ui.display_bench_summary(summary.to_dict('records'))
    failures = int(summary["failures"].sum())
    if failures:
        ui.display_error(f"{failures} runs failed; see the log")
    ui.display_success(f"Benchmarked {report.rows['instance'].nunique()} instances", str(summary_path))
    return 0


def _parse_modes(text: str) -> List[str]:
    return [SolveMode(m.strip().lower()).value for m in text.split(',') if m.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog='duty-sieve',
        allow_abbrev=False,
        description='Column generation for railway crew scheduling with learned graph reduction'
    )
    parser.add_argument('--config', help='JSON settings file (generator/solver/reduction/training)')
    parser.add_argument('--log-dir', help='Directory for duty_sieve.log')
    parser.add_argument('--log-level', help='DEBUG, INFO, WARNING or ERROR')
    sub = parser.add_subparsers(dest='command', required=True)

    p = sub.add_parser('generate', help='Generate random instances')
    p.add_argument('--seed', type=int, help='Seed of the first instance (default 1)')
    p.add_argument('--count', type=int, default=1, help='Number of instances')
    p.add_argument('--out', required=True, help='Output directory')
    p.add_argument('--scale', type=float, help='Edge-count multiplier (2 for the generalization set)')

    p = sub.add_parser('label', help='Label instances with baseline column generation')
    p.add_argument('--instances', nargs='+', required=True, help='Instance files or directories')
    p.add_argument('--out', required=True, help='Directory for label files and dataset.csv')
    p.add_argument('--workers', type=int, help='Parallel worker processes')

    p = sub.add_parser('train', help='Train the edge prediction model')
    p.add_argument('--data', required=True, help='Directory written by `label`')
    p.add_argument('--out', required=True, help='Checkpoint path')
    p.add_argument('--log', help='Training log CSV (default: next to the checkpoint)')
    p.add_argument('--epochs', type=int)
    p.add_argument('--lr', type=float)
    p.add_argument('--batch-graphs', type=int)
    p.add_argument('--hidden', type=int, help='Hidden size of the convolution and MLP layers')
    p.add_argument('--l-conv', type=int)
    p.add_argument('--l-mlp', type=int)
    p.add_argument('--w-neg', type=float, help='Loss weight of negative edges')
    p.add_argument('--seed', type=int)
    p.add_argument('--patience', type=int)
    p.add_argument('--shuffle-labels', action='store_true', help='Permute labels (sanity control)')

    p = sub.add_parser('solve', help='Solve one instance')
    p.add_argument('--instance', required=True)
    p.add_argument('--mode', choices=[m.value for m in SolveMode], default=SolveMode.BASELINE.value)
    p.add_argument('--model', help='Checkpoint (required for optimal and fast)')
    p.add_argument('--log', help='Trajectory CSV (elapsed_s,objective)')
    p.add_argument('--report', help='Write the full solve report as JSON')
    p.add_argument('--scores', help='Write model scores and solution labels per connection edge (needs --model)')
    p.add_argument('--threshold', type=float, help='Edge score threshold')
    p.add_argument('--no-guard', action='store_true', help='Disable the connectivity guard')

    p = sub.add_parser('bench', help='Benchmark modes over an instance set')
    p.add_argument('--instances', nargs='+', required=True)
    p.add_argument('--modes', default='baseline,optimal,fast', help='Comma-separated modes')
    p.add_argument('--model', help='Checkpoint (required for optimal and fast)')
    p.add_argument('--report', required=True, help='Report CSV path')
    p.add_argument('--workers', type=int)
    p.add_argument('--threshold', type=float)
    p.add_argument('--no-guard', action='store_true')
    return parser


COMMANDS = {
    'generate': cmd_generate,
    'label': cmd_label,
    'train': cmd_train,
    'solve': cmd_solve,
    'bench': cmd_bench,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)

    if args.command == 'solve' and args.mode != SolveMode.BASELINE.value and not args.model:
        parser.error(f"--mode {args.mode} requires --model")
    if args.command == 'solve' and args.scores and not args.model:
        parser.error("--scores requires --model")
    if args.command == 'bench':
        try:
            modes = _parse_modes(args.modes)
        except ValueError as e:
            parser.error(f"--modes: {e}")
        if any(m != SolveMode.BASELINE.value for m in modes) and not args.model:
            parser.error("--modes other than baseline require --model")
    if getattr(args, 'count', 1) < 1:
        parser.error("--count must be at least 1")

    env = EnvironmentConfig.load()
    setup_logging(args.log_dir or env['log_dir'], args.log_level or env['log_level'])
    ui = ConsoleUI()
    ui.display_welcome()

    handler = setup_error_handler(ui.console)
    settings = handler(load_settings)(args.config)
    return handler(COMMANDS[args.command])(args, settings, env, ui)


if __name__ == "__main__":
    sys.exit(main())
