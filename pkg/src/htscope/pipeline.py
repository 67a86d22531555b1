"""Experiment orchestration: dataset generation, training, evaluation, sweeps.

Every artifact a run writes is a deterministic function of the experiment
config; wall-clock timestamps are confined to the ``created_at`` metadata
field of manifests. All randomness is derived from the master seed through
labeled child seeds (see :mod:`htscope.seeding`).
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import detector, dse, trojan
from .config import ExperimentConfig
from .errors import CompatibilityError, ConfigError, DataError
from .isa import generate_workload
from .metrics import EvalReport, tally
from .seeding import rng_for
from .soc_power import (
    PipelineStage,
    PowerModelTable,
    load_default_power_model,
    simulate_trace,
)
from .spcab import (
    AdcSpec,
    FeatureStream,
    acquire,
    default_adc,
    features_from_bytes,
    features_to_bytes,
)
from .trojan import TriggerSpec, TrojanModel
from .variation import AgingSpec, PvSpec, apply_aging, apply_pv


def build_adc(cfg: ExperimentConfig, table: PowerModelTable) -> AdcSpec:
    if cfg.adc.full_scale is None:
        return default_adc(table, bits=cfg.adc.bits)
    return AdcSpec(bits=cfg.adc.bits, full_scale=cfg.adc.full_scale)


def select_benchmarks(cfg: ExperimentConfig) -> tuple[list[TrojanModel], list[TrojanModel]]:
    catalog = trojan.catalog()
    def pick(names: list[str] | None, split: str) -> list[TrojanModel]:
        if names is None:
            return [m for m in catalog.values() if m.split == split]
        out = []
        for n in names:
            if n not in catalog:
                raise ConfigError(f"trojan benchmark {n!r} not in catalog")
            out.append(catalog[n])
        return out
    return pick(cfg.trojan.train_benchmarks, "train"), pick(cfg.trojan.eval_benchmarks, "eval")


@dataclass
class Cell:
    """One generated evaluation cell: a benchmark under one perturbation."""

    benchmark: str
    stream: FeatureStream
    tags: dict


def generate_cell(
    cfg: ExperimentConfig,
    table: PowerModelTable,
    adc: AdcSpec,
    workload_name: str,
    benchmark: TrojanModel | None,
    cycles: int,
    activations: int,
    pv_range: float | None = None,
    pv_trial: int = 0,
    pv_distribution: str | None = None,
    aging: AgingSpec | None = None,
    seed_tag: str = "eval",
    workload_seed: int | None = None,
    background_load: float | None = None,
) -> FeatureStream:
    """Simulate, inject, perturb and acquire one feature stream."""
    bench_name = benchmark.name if benchmark is not None else "S0"
    wl_seed = workload_seed if workload_seed is not None else int(
        rng_for(cfg.master_seed, seed_tag, "wl-seed", workload_name).integers(2**31)
    )
    workload = generate_workload(workload_name, max(cycles, 1), wl_seed)
    trace_seed = int(
        rng_for(cfg.master_seed, seed_tag, "trace", workload_name, bench_name, pv_trial).integers(
            2**31
        )
    )
    trace = simulate_trace(
        workload,
        table,
        cycles,
        seed=trace_seed,
        noise_sigma=cfg.trace.noise_sigma,
        background_load=background_load
        if background_load is not None
        else cfg.trace.background_load,
    )
    if benchmark is not None and activations > 0:
        trig_seed = int(
            rng_for(cfg.master_seed, seed_tag, "trigger", bench_name, pv_trial).integers(2**31)
        )
        model = benchmark.with_trigger(
            TriggerSpec(mode="fixed_count", target_activations=activations, seed=trig_seed)
        )
        trace = trojan.inject(trace, model)
    rng_pv = cfg.pv.range if pv_range is None else pv_range
    if rng_pv > 0:
        pv_seed = int(rng_for(cfg.master_seed, seed_tag, "pv", bench_name).integers(2**31))
        spec = PvSpec(
            range=rng_pv,
            granularity=cfg.pv.granularity,
            distribution=pv_distribution or cfg.pv.distribution,
            seed=pv_seed,
        )
        trace = apply_pv(trace, spec, trial=pv_trial)
    if aging is not None and aging.year != "Y0":
        trace = apply_aging(trace, aging)
    start = PipelineStage[cfg.adc.start_stage]
    return acquire(trace, adc, start_stage=start)


# --- gen -----------------------------------------------------------------


def _sha256(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def cmd_gen(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> Path:
    """Generate the training and evaluation datasets plus a manifest."""
    cfg.validate()
    out = Path(out_dir if out_dir is not None else cfg.out_dir) / "dataset"
    out.mkdir(parents=True, exist_ok=True)
    table = load_default_power_model()
    adc = build_adc(cfg, table)
    train_benches, eval_benches = select_benchmarks(cfg)

    manifest: dict = {
        "config": cfg.to_dict(),
        "catalog_version": "1",
        "adc": {"bits": adc.bits, "full_scale": adc.full_scale},
        "files": {},
        "train_benchmarks": [b.name for b in train_benches],
        "eval_benchmarks": [b.name for b in eval_benches],
        "created_at": datetime.now(timezone.utc).isoformat(),  # metadata only
    }

    # Training set: every train workload crossed with S0 plus each training
    # benchmark, over several PV trials, then a seeded subsample.
    parts: list[FeatureStream] = []
    td = cfg.train_data
    trial_ranges: list[float | None] = (
        list(td.pv_ranges) if td.pv_ranges is not None else [None] * td.pv_trials
    )
    for workload_name in cfg.workloads.train:
        for bench in [None, *train_benches]:
            for trial, trial_range in enumerate(trial_ranges):
                parts.append(
                    generate_cell(
                        cfg,
                        table,
                        adc,
                        workload_name,
                        bench,
                        cycles=td.trace_cycles,
                        activations=0 if bench is None else td.activations_per_trace,
                        pv_range=trial_range,
                        pv_trial=trial,
                        pv_distribution=td.pv_distribution,
                        aging=None,
                        seed_tag=f"train/{workload_name}",
                    )
                )
    full = FeatureStream.concatenate(parts)
    if len(full) > td.max_samples:
        rng = rng_for(cfg.master_seed, "train", "subsample")
        keep = np.sort(rng.choice(len(full), size=td.max_samples, replace=False))
        full = full.subset(keep)
    train_bytes = features_to_bytes(full)
    (out / "train.features").write_bytes(train_bytes)
    manifest["files"]["train.features"] = {
        "sha256": _sha256(train_bytes),
        "samples": len(full),
        "positives": int(full.ground_truth.sum()),
        "workloads": list(cfg.workloads.train),
        "benchmarks": [b.name for b in train_benches],
    }

    # Evaluation set: one full-protocol stream per eval benchmark.
    for bench in eval_benches:
        for workload_name in cfg.workloads.eval:
            stream = generate_cell(
                cfg,
                table,
                adc,
                workload_name,
                bench,
                cycles=cfg.trace.cycles,
                activations=cfg.trojan.activations,
                aging=AgingSpec(year=cfg.aging.year, policy=cfg.aging.policy),
                seed_tag=f"eval/{workload_name}",
            )
            data = features_to_bytes(stream)
            fname = f"eval_{bench.name}_{workload_name}.features"
            (out / fname).write_bytes(data)
            manifest["files"][fname] = {
                "sha256": _sha256(data),
                "samples": len(stream),
                "positives": int(stream.ground_truth.sum()),
                "benchmark": bench.name,
                "workload": workload_name,
            }

    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return out


# --- train ---------------------------------------------------------------


def cmd_train(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> Path:
    """Run DSE on the generated training data and serialize the chosen model."""
    cfg.validate()
    base = Path(out_dir if out_dir is not None else cfg.out_dir)
    dataset = base / "dataset"
    train_path = dataset / "train.features"
    if not train_path.exists():
        raise DataError(f"training dataset not found: {train_path} (run gen first)")
    manifest = json.loads((dataset / "manifest.json").read_text())

    stream = features_from_bytes(train_path.read_bytes())
    data = detector.TrainingSet.from_stream(
        stream,
        split_tag="train",
        workloads=manifest["files"]["train.features"]["workloads"],
        benchmarks=manifest["files"]["train.features"]["benchmarks"],
    )
    hyper = detector.Hyper(
        seed=cfg.master_seed,
        epochs=cfg.mlp.epochs,
        learning_rate=cfg.mlp.learning_rate,
        class_weight=cfg.mlp.class_weight,
        threshold=cfg.mlp.threshold,
    )
    # Exploration may use a reduced budget; the chosen topology then trains
    # on the full data with the deployment hyperparameters.
    dse_hyper = detector.Hyper(
        seed=cfg.master_seed,
        epochs=cfg.dse.epochs if cfg.dse.epochs is not None else cfg.mlp.epochs,
        learning_rate=(
            cfg.dse.learning_rate
            if cfg.dse.learning_rate is not None
            else cfg.mlp.learning_rate
        ),
        class_weight=cfg.mlp.class_weight,
        threshold=cfg.mlp.threshold,
    )
    dse_data = data
    if cfg.dse.subsample is not None and cfg.dse.subsample < len(data.features):
        rng = rng_for(cfg.master_seed, "dse", "subsample")
        keep = np.sort(rng.choice(len(data.features), size=cfg.dse.subsample, replace=False))
        dse_data = detector.TrainingSet(
            features=data.features.subset(keep),
            labels=data.labels[keep],
            split_tag="dse",
            provenance=dict(data.provenance),
        )
    grid = dse.DseGrid(
        layer_options=tuple(cfg.dse.layer_options),
        neuron_options=tuple(cfg.dse.neuron_options),
    )
    dse.explore(dse_data, grid, dse_hyper, k=cfg.k_fold)
    chosen = dse.select(
        grid,
        max_parameter_count=cfg.dse.max_parameter_count,
        max_mac_cost=cfg.dse.max_mac_cost,
    )
    model = detector.train(data, chosen, hyper)
    model.train_meta["provenance"] = {
        "workloads": manifest["files"]["train.features"]["workloads"],
        "benchmarks": manifest["files"]["train.features"]["benchmarks"],
        "dataset_sha256": manifest["files"]["train.features"]["sha256"],
    }

    (base / "dse_report.csv").write_text(dse.grid_to_csv(grid))
    (base / "model.json").write_text(detector.model_to_json(model))
    return base / "model.json"


# --- eval ----------------------------------------------------------------


def _load_model(model_path: str | Path) -> detector.MlpModel:
    return detector.model_from_json(Path(model_path).read_text())


def _report_rows_to_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=list(rows[0].keys()), lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    return out.getvalue()


def cmd_eval(
    cfg: ExperimentConfig,
    model_path: str | Path,
    out_dir: str | Path | None = None,
    allow_train_benchmarks: bool = False,
) -> list[EvalReport]:
    """Classify every generated eval stream and write per-cell reports."""
    cfg.validate()
    base = Path(out_dir if out_dir is not None else cfg.out_dir)
    dataset = base / "dataset"
    if not dataset.exists():
        raise DataError(f"dataset directory not found: {dataset}")
    manifest = json.loads((dataset / "manifest.json").read_text())
    model = _load_model(model_path)

    trained_on = set(model.train_meta.get("provenance", {}).get("benchmarks", []))
    reports: list[EvalReport] = []
    for fname, info in sorted(manifest["files"].items()):
        if not fname.startswith("eval_"):
            continue
        bench = info["benchmark"]
        if bench in trained_on and not allow_train_benchmarks:
            raise CompatibilityError(
                f"benchmark {bench!r} was used in training; pass "
                "allow_train_benchmarks to evaluate it anyway"
            )
        stream = features_from_bytes((dataset / fname).read_bytes())
        pred, _ = detector.classify_stream(model, stream)
        reports.append(
            EvalReport(
                counts=tally(pred, stream.ground_truth),
                benchmark=bench,
                tags={
                    "workload": info["workload"],
                    "pv_range": cfg.pv.range,
                    "aging_year": cfg.aging.year,
                    "aging_policy": cfg.aging.policy,
                },
            )
        )

    rows = [r.to_row() for r in reports]
    (base / "eval_report.json").write_text(json.dumps(rows, indent=2, sort_keys=True))
    (base / "eval_report.csv").write_text(_report_rows_to_csv(rows))
    return reports


# --- sweeps --------------------------------------------------------------

SWEEP_AXES = ("pv_range", "aging", "input_vector", "cross_core_workload")

DEFAULT_PV_SWEEP = (0.0, 0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08, 0.09, 0.10)
DEFAULT_AGING_YEARS = ("Y0", "Y1", "Y2", "Y5", "Y10")
DEFAULT_AGING_POLICIES = ("none", "fast_core_age_first", "balanced")


def _eval_cells(
    cfg: ExperimentConfig,
    model: detector.MlpModel,
    benches: list[TrojanModel],
    *,
    pv_range: float,
    aging: AgingSpec,
    seed_tag: str,
    workload_seed: int | None = None,
    background_load: float | None = None,
    cycles: int | None = None,
    activations: int | None = None,
    trials: int = 1,
) -> list[EvalReport]:
    table = load_default_power_model()
    adc = build_adc(cfg, table)
    n_cycles = cycles if cycles is not None else cfg.trace.cycles
    n_act = activations if activations is not None else cfg.trojan.activations
    reports = []
    for bench in benches:
        for workload_name in cfg.workloads.eval:
            for trial in range(trials):
                stream = generate_cell(
                    cfg,
                    table,
                    adc,
                    workload_name,
                    bench,
                    cycles=n_cycles,
                    activations=n_act,
                    pv_range=pv_range,
                    pv_trial=trial,
                    aging=aging,
                    seed_tag=seed_tag,
                    workload_seed=workload_seed,
                    background_load=background_load,
                )
                pred, _ = detector.classify_stream(model, stream)
                reports.append(
                    EvalReport(
                        counts=tally(pred, stream.ground_truth),
                        benchmark=bench.name,
                        tags={
                            "workload": workload_name,
                            "pv_range": pv_range,
                            "aging_year": aging.year,
                            "aging_policy": aging.policy,
                            "trial": trial,
                        },
                    )
                )
    return reports


def cmd_sweep(
    cfg: ExperimentConfig,
    axis: str,
    model_path: str | Path,
    out_dir: str | Path | None = None,
    cycles: int | None = None,
    activations: int | None = None,
    trials: int = 1,
) -> list[dict]:
    """Run an evaluation sweep along one axis and write tidy plot data.

    Conditions along one axis share seeds (same workload, trace noise, and
    PV dies), so comparisons across the axis are paired.
    """
    cfg.validate()
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {SWEEP_AXES}")
    base = Path(out_dir if out_dir is not None else cfg.out_dir)
    base.mkdir(parents=True, exist_ok=True)
    model = _load_model(model_path)
    _, eval_benches = select_benchmarks(cfg)

    rows: list[dict] = []
    if axis == "pv_range":
        for r in DEFAULT_PV_SWEEP:
            reports = _eval_cells(
                cfg, model, eval_benches,
                pv_range=r,
                aging=AgingSpec(year="Y0", policy="none"),
                seed_tag="sweep/pv",
                cycles=cycles, activations=activations, trials=trials,
            )
            rows += [r2.to_row() for r2 in reports]
    elif axis == "aging":
        for year in DEFAULT_AGING_YEARS:
            for policy in DEFAULT_AGING_POLICIES:
                reports = _eval_cells(
                    cfg, model, eval_benches,
                    pv_range=cfg.pv.range,
                    aging=AgingSpec(year=year, policy=policy),
                    seed_tag="sweep/aging",
                    cycles=cycles, activations=activations, trials=trials,
                )
                rows += [r2.to_row() for r2 in reports]
    elif axis == "input_vector":
        for vec in range(3):
            reports = _eval_cells(
                cfg, model, eval_benches,
                pv_range=cfg.pv.range,
                aging=AgingSpec(year=cfg.aging.year, policy=cfg.aging.policy),
                seed_tag=f"sweep/input/{vec}",
                workload_seed=1000 + vec,
                cycles=cycles, activations=activations, trials=trials,
            )
            for r2 in reports:
                r2.tags["input_vector"] = vec
            rows += [r2.to_row() for r2 in reports]
    else:  # cross_core_workload: trusted core stays on its eval workload
        for name, load in sorted(cfg.cross_core_loads.items()):
            reports = _eval_cells(
                cfg, model, eval_benches,
                pv_range=cfg.pv.range,
                aging=AgingSpec(year=cfg.aging.year, policy=cfg.aging.policy),
                seed_tag="sweep/xcore",
                background_load=load,
                cycles=cycles, activations=activations, trials=trials,
            )
            for r2 in reports:
                r2.tags["cross_core_workload"] = name
            rows += [r2.to_row() for r2 in reports]

    (base / f"sweep_{axis}.csv").write_text(_report_rows_to_csv(rows))
    return rows
