"""Command-line entry points.

Subcommands: gen, train, eval, sweep, catalog, sizing-report. Exit code 0 on
success; on failure a machine-readable JSON error object is written to
stderr and the exit code is nonzero. ``HTSCOPE_OUT`` sets the default
output directory.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

from .config import ExperimentConfig, load_config
from .errors import HtscopeError
from . import pipeline, spcab, trojan
from .soc_power import default_stage_profile, load_default_power_model


def _parse_overrides(pairs: list[str]) -> dict:
    out = {}
    for pair in pairs:
        if "=" not in pair:
            raise HtscopeError(f"override must look like section.field=value: {pair!r}")
        key, raw = pair.split("=", 1)
        out[key] = json.loads(raw) if raw and raw[0] in "-0123456789[{tfn\"" else raw
    return out


def _load(args: argparse.Namespace) -> ExperimentConfig:
    overrides = _parse_overrides(args.set or [])
    if args.config:
        cfg = load_config(args.config, overrides)
    else:
        from .config import config_from_dict

        cfg = config_from_dict(overrides_to_tree(overrides))
    if args.out:
        cfg.out_dir = args.out
    elif os.environ.get("HTSCOPE_OUT"):
        cfg.out_dir = os.environ["HTSCOPE_OUT"]
    return cfg


def overrides_to_tree(flat: dict) -> dict:
    tree: dict = {}
    for dotted, value in flat.items():
        node = tree
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return tree


def default_branch_currents(vdd: float = 1.2) -> dict[str, list[float]]:
    """Per-stage component branch currents derived from the idle power split
    evenly across that stage's components."""
    table = load_default_power_model()
    currents = {}
    for spec in default_stage_profile():
        total = float(table.idle_power[spec.stage]) / vdd
        # Components carry unequal shares; spread them deterministically.
        shares = [1.0 + 0.25 * i for i in range(spec.component_count)]
        norm = sum(shares)
        currents[spec.stage.name] = [total * s / norm for s in shares]
    return currents


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(prog="htscope")
    parser.add_argument("--config", help="experiment config YAML")
    parser.add_argument("--out", help="output directory (overrides config)")
    parser.add_argument(
        "--set", action="append", metavar="FIELD=VALUE",
        help="override a config field, e.g. --set pv.range=0.1",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sub.add_parser("gen", help="generate train/eval datasets")
    sub.add_parser("train", help="run DSE and train the detector")

    p_eval = sub.add_parser("eval", help="evaluate a trained model")
    p_eval.add_argument("--model", required=True)
    p_eval.add_argument(
        "--allow-train-benchmarks", action="store_true",
        help="permit evaluating benchmarks that were used in training",
    )

    p_sweep = sub.add_parser("sweep", help="run an evaluation sweep")
    p_sweep.add_argument("axis", choices=pipeline.SWEEP_AXES)
    p_sweep.add_argument("--model", required=True)
    p_sweep.add_argument("--cycles", type=int, help="trace length per sweep cell")
    p_sweep.add_argument("--activations", type=int, help="Trojan activations per cell")
    p_sweep.add_argument("--trials", type=int, default=1, help="PV trials per cell")

    sub.add_parser("catalog", help="print the Trojan signature catalog")
    sub.add_parser("sizing-report", help="print the sensor sizing report")

    args = parser.parse_args(argv)
    try:
        if args.command == "catalog":
            models = trojan.catalog()
            rows = [
                {
                    "name": m.name,
                    "split": m.split,
                    "stage_delta": m.stage_delta.tolist(),
                    "duration_cycles": m.duration_cycles,
                    "dominant_delta": m.dominant_delta(),
                }
                for m in models.values()
            ]
            print(json.dumps(rows, indent=2))
            return 0
        if args.command == "sizing-report":
            report = spcab.sizing_report(default_stage_profile(), default_branch_currents())
            print(json.dumps(report, indent=2))
            return 0

        cfg = _load(args)
        if args.command == "gen":
            out = pipeline.cmd_gen(cfg)
            print(f"dataset written to {out}")
        elif args.command == "train":
            model_path = pipeline.cmd_train(cfg)
            print(f"model written to {model_path}")
        elif args.command == "eval":
            reports = pipeline.cmd_eval(
                cfg, args.model, allow_train_benchmarks=args.allow_train_benchmarks
            )
            for r in reports:
                mcc = r.mcc
                print(
                    f"{r.benchmark}: accuracy={r.accuracy:.4f} "
                    f"mcc={'undefined' if mcc is None else f'{mcc:.4f}'}"
                )
        elif args.command == "sweep":
            rows = pipeline.cmd_sweep(
                cfg, args.axis, args.model,
                cycles=args.cycles, activations=args.activations, trials=args.trials,
            )
            print(f"{len(rows)} sweep rows written to {cfg.out_dir}/sweep_{args.axis}.csv")
        return 0
    except HtscopeError as exc:
        json.dump({"error": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
