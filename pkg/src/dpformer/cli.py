"""Command-line driver: ``dpformer {train,eval,ablate,gradcheck,plot,synth}``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from .checkpoint import read_checkpoint, restore_model, save_checkpoint
from .config import PROFILES, ExperimentConfig, load_config, profile_config
from .errors import ConfigError, FormatError
from .export import export_and_plot, plot_accuracy, plot_forgetting
from .harness.data import SyntheticSpec, synthesize, write_dpfd
from .harness.experiment import ABLATION_FIELDS, GRIDS, Hooks, build_scenario, run_ablation, run_experiment
from .harness.metrics import MetricsLog
from .harness.training import evaluate

log = logging.getLogger("dpformer")


def _experiment_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", type=Path, help="key = value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--profile", choices=sorted(PROFILES))
    p.add_argument("--no-class-prompt", action="store_true")
    p.add_argument("--no-task-prompt", action="store_true")
    p.add_argument("--no-kd", action="store_true")
    p.add_argument("--no-aux", action="store_true")
    p.add_argument("--attention", choices=["msa", "dina"])
    p.add_argument("--epochs", type=int, help="override train.epochs")


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    """Config file (or profile defaults), then command-line overrides."""
    if args.config is not None:
        cfg = load_config(args.config, args.profile)
    else:
        cfg = profile_config(args.profile or "paper")
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out is not None:
        cfg.out_dir = str(args.out)
    if args.epochs is not None:
        cfg.train = replace(cfg.train, epochs=args.epochs)
    ab = cfg.ablation
    cfg.ablation = replace(
        ab,
        class_prompt=ab.class_prompt and not args.no_class_prompt,
        task_prompt=ab.task_prompt and not args.no_task_prompt,
        kd=ab.kd and not args.no_kd,
        aux=ab.aux and not args.no_aux,
        attention=args.attention or ab.attention,
    )
    cfg.validate()
    return cfg


def cmd_train(args) -> int:
    cfg = resolve_config(args)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    final = {}
    hooks = Hooks(on_task_end=lambda t, model, metrics: final.update(model=model))
    metrics = run_experiment(cfg, hooks)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")
    save_checkpoint(out / "model.npz", final["model"], cfg)
    paths = export_and_plot(metrics, out)
    print(f"avg accuracy {metrics.avg_accuracy():.4f}  last accuracy {metrics.last_accuracy:.4f}")
    for name, p in paths.items():
        print(f"{name}: {p}")
    return 0


def cmd_eval(args) -> int:
    ckpt = read_checkpoint(args.checkpoint)
    model = restore_model(ckpt)
    cfg = ckpt.config
    scenario = build_scenario(cfg)
    per_class, overall = evaluate(model, scenario, ckpt.task)
    print(f"task {ckpt.task}: overall accuracy {overall:.4f}")
    for j, acc in enumerate(per_class):
        print(f"  class {j} (original label {scenario.class_order[j]}): {acc:.4f}")
    return 0


def cmd_ablate(args) -> int:
    base = resolve_config(args)
    names = args.configs or GRIDS[args.grid]
    seeds = list(range(base.seed, base.seed + args.seeds))
    rows = run_ablation(base, names, seeds)
    out = Path(base.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "ablation.csv"
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, ABLATION_FIELDS, lineterminator="\n")
        writer.writeheader()
        writer.writerows(rows)
    for name in names:
        last = [r["last_acc"] for r in rows if r["config"] == name]
        print(f"{name:12s} mean last accuracy {np.mean(last):.4f} over {len(last)} seeds")
    print(f"rows: {path}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradcheck import main_report

    ok, report = main_report(args.seed or 0)
    print(report)
    return 0 if ok else 1


def read_log(outdir: Path) -> MetricsLog:
    """Rebuild a metrics log from ``per_class.csv`` and ``metrics.csv``."""
    with open(outdir / "per_class.csv", newline="") as fh:
        per_class = list(csv.DictReader(fh))
    with open(outdir / "metrics.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    metrics = MetricsLog()
    for row in rows:
        t = int(row["task"])
        acc = [float(r["acc"]) for r in per_class if int(r["task"]) == t]
        metrics.record(np.array(acc), float(row["overall_acc"]), int(row["params"]))
    return metrics


def cmd_plot(args) -> int:
    metrics = read_log(args.run)
    out = args.out or args.run
    out.mkdir(parents=True, exist_ok=True)
    print(plot_accuracy(metrics, out / "accuracy.svg"))
    print(plot_forgetting(metrics, out / "forgetting.svg"))
    return 0


def cmd_synth(args) -> int:
    spec = SyntheticSpec(args.classes, args.train_per_class, args.test_per_class, args.size,
                         args.channels, args.noise_std, args.pattern_seed)
    train, test = synthesize(spec, args.seed)
    args.out.mkdir(parents=True, exist_ok=True)
    write_dpfd(train, args.out / "train.dpfd")
    write_dpfd(test, args.out / "test.dpfd")
    print(f"wrote {len(train)} train / {len(test)} test records to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dpformer", description=__doc__)
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="run a full class-incremental experiment")
    _experiment_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved checkpoint on its scenario")
    p.add_argument("checkpoint", type=Path)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run an ablation grid over several seeds")
    _experiment_args(p)
    p.add_argument("--grid", choices=sorted(GRIDS), default="prompts")
    p.add_argument("--configs", nargs="+", help="explicit configuration names instead of a grid")
    p.add_argument("--seeds", type=int, default=5, help="number of consecutive seeds")
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("plot", help="redraw SVG charts from a run directory")
    p.add_argument("run", type=Path)
    p.add_argument("--out", type=Path)
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("synth", help="write a synthetic dataset as DPFD files")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--classes", type=int, default=10)
    p.add_argument("--train-per-class", type=int, default=200)
    p.add_argument("--test-per-class", type=int, default=50)
    p.add_argument("--size", type=int, default=8)
    p.add_argument("--channels", type=int, default=1)
    p.add_argument("--noise-std", type=float, default=0.05)
    p.add_argument("--pattern-seed", type=int, default=0)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    level = [logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)]
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, FormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
