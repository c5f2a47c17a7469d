"""Command-line driver.

Verbs: prepare-data, run-sweep, ablate-prompts, submartingale-lab,
emit-plots, validate-generator.  Experiment verbs read a key=value config
file; flags override file values.  Endpoint credentials are taken from the
environment (never from flags or files), and selecting the llm generator
without a credential is a startup error.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import experiment
from .data import DatasetSpec, load_raw, prepare, save_prepared
from .generator import (
    ConformingMockGenerator,
    EndpointConfig,
    LlmGenerator,
    shape_accuracy,
)


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="key=value config file")
    parser.add_argument("--seed", type=int, default=None, help="override master seed")
    parser.add_argument("--out", default=None, help="override output directory")
    parser.add_argument("--workers", type=int, default=1, help="worker pool size")
    parser.add_argument("--endpoint", default=None, help="override endpoint URL")
    parser.add_argument("--mock", action="store_true",
                        help="force the conforming mock generator")


def _load_experiment_config(args) -> experiment.ExperimentConfig:
    overrides = {
        "seed": args.seed,
        "output_dir": args.out,
        "endpoint_url": args.endpoint,
        "generator": "mock" if args.mock else None,
    }
    return experiment.load_config(Path(args.config), overrides)


def _resolve_api_key(cfg: experiment.ExperimentConfig) -> str:
    if cfg.method != "adainit" or cfg.generator != "llm":
        return ""
    key = os.environ.get(cfg.api_key_env, "")
    if not key:
        raise SystemExit(
            f"error: generator 'llm' needs a credential in ${cfg.api_key_env} "
            f"(or pass --mock)"
        )
    if not cfg.endpoint_url or not cfg.model:
        raise SystemExit("error: generator 'llm' needs endpoint_url and model")
    return key


def _cmd_prepare_data(args) -> int:
    spec = DatasetSpec(args.dataset, Path(args.path))
    raw = load_raw(spec)
    prepared = prepare(raw, args.qubits, seed=args.seed)
    save_prepared(prepared, Path(args.out))
    sizes = {name: len(idx) for name, idx in prepared.split_indices.items()}
    print(f"prepared {prepared.name}: {prepared.features.shape[0]} rows x "
          f"{prepared.features.shape[1]} features, splits {sizes}, "
          f"reducer {prepared.reducer_provenance}")
    print(f"content hash {prepared.content_hash()}")
    print(f"wrote {args.out}")
    return 0


def _cmd_run_sweep(args) -> int:
    cfg = _load_experiment_config(args)
    api_key = _resolve_api_key(cfg)
    path = experiment.run_sweep(cfg, workers=args.workers, api_key=api_key)
    print(f"wrote {path}")
    return 0


def _cmd_ablate_prompts(args) -> int:
    cfg = _load_experiment_config(args)
    api_key = _resolve_api_key(cfg)
    path = experiment.ablate_prompts(cfg, workers=args.workers, api_key=api_key)
    print(f"wrote {path}")
    return 0


def _cmd_submartingale_lab(args) -> int:
    path = experiment.run_submartingale_lab(Path(args.out), seed=args.seed,
                                            trials=args.trials)
    print(f"wrote {path}")
    return 0


def _cmd_emit_plots(args) -> int:
    written = experiment.emit_plot_data(args.results, Path(args.out))
    for path in written:
        print(f"wrote {path}")
    return 0


def _cmd_validate_generator(args) -> int:
    if args.mock:
        generator = ConformingMockGenerator(seed=args.seed)
        label = "mock"
    else:
        if not args.endpoint or not args.model:
            raise SystemExit("error: pass --mock, or --endpoint plus --model")
        key = os.environ.get(args.api_key_env, "")
        if not key:
            raise SystemExit(f"error: credential missing from ${args.api_key_env}")
        generator = LlmGenerator(EndpointConfig(base_url=args.endpoint,
                                                model=args.model, api_key=key))
        label = args.model
    score, details = shape_accuracy(generator, num_classes=args.classes)
    for rec in details:
        status = "ok" if rec["accepted"] else f"reject ({rec['error']})"
        print(f"L={rec['layers']:>2} N={rec['qubits']:>2}: {status}")
    print(f"shape accuracy for {label}: {score:.0%} "
          f"({sum(r['accepted'] for r in details)}/{len(details)})")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bplab")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare-data", help="ingest, reduce, and cache a dataset")
    p.add_argument("--dataset", required=True,
                   choices=["iris", "wine", "titanic", "mnist"])
    p.add_argument("--path", required=True, help="source file (directory for mnist)")
    p.add_argument("--qubits", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="output container path")
    p.set_defaults(func=_cmd_prepare_data)

    p = sub.add_parser("run-sweep", help="run a configured sweep")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_run_sweep)

    p = sub.add_parser("ablate-prompts", help="run the four prompt arms")
    _add_config_flags(p)
    p.set_defaults(func=_cmd_ablate_prompts)

    p = sub.add_parser("submartingale-lab",
                       help="Monte Carlo checks of the gated-increment process")
    p.add_argument("--out", default="submartingale_lab.jsonl")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=1000)
    p.set_defaults(func=_cmd_submartingale_lab)

    p = sub.add_parser("emit-plots", help="aggregate results into plot tables")
    p.add_argument("results", nargs="+", help="result files")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_emit_plots)

    p = sub.add_parser("validate-generator",
                       help="score shape accuracy over the 20-config grid")
    p.add_argument("--mock", action="store_true")
    p.add_argument("--endpoint", default=None)
    p.add_argument("--model", default=None)
    p.add_argument("--api-key-env", default="BPLAB_API_KEY")
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_validate_generator)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
