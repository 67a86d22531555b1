"""Declarative experiment configuration.

One YAML file describes a whole experiment (generation, training, DSE,
evaluation, sweeps); CLI flags can override individual fields with
precedence flags > file > defaults. Everything downstream is a pure
function of this config plus the master seed.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from .errors import ConfigError

CONFIG_VERSION = 1


@dataclass
class TraceConfig:
    cycles: int = 100_000
    noise_sigma: float = 0.005
    background_load: float = 1.0

    def validate(self) -> None:
        if self.cycles < 7:
            raise ConfigError("trace.cycles: must be >= 7")
        if self.noise_sigma < 0:
            raise ConfigError("trace.noise_sigma: must be >= 0")
        if self.background_load <= 0:
            raise ConfigError("trace.background_load: must be positive")


@dataclass
class WorkloadConfig:
    train: list[str] = field(default_factory=lambda: ["add", "sub", "mul"])
    eval: list[str] = field(default_factory=lambda: ["div"])

    def validate(self) -> None:
        if not self.train or not self.eval:
            raise ConfigError("workloads: train and eval lists must be non-empty")


@dataclass
class TrojanConfig:
    activations: int = 1000
    train_benchmarks: list[str] | None = None  # None: every catalog train entry
    eval_benchmarks: list[str] | None = None  # None: every catalog eval entry

    def validate(self) -> None:
        if self.activations < 0:
            raise ConfigError("trojan.activations: must be >= 0")


@dataclass
class AdcConfig:
    bits: int = 10
    full_scale: float | None = None  # None: 2x max nominal table power
    start_stage: str = "FETCH"

    def validate(self) -> None:
        if self.bits < 1:
            raise ConfigError("adc.bits: must be >= 1")
        if self.full_scale is not None and self.full_scale <= 0:
            raise ConfigError("adc.full_scale: must be positive")


@dataclass
class PvConfig:
    range: float = 0.05
    granularity: str = "per_stage"
    distribution: str = "gaussian_3sigma"

    def validate(self) -> None:
        if not 0.0 <= self.range <= 0.10:
            raise ConfigError("pv.range: must lie in [0, 0.10]")
        if self.granularity not in ("per_chip", "per_stage"):
            raise ConfigError(f"pv.granularity: unknown granularity {self.granularity!r}")
        if self.distribution not in ("gaussian_3sigma", "uniform"):
            raise ConfigError(f"pv.distribution: unknown distribution {self.distribution!r}")


@dataclass
class AgingConfig:
    year: str = "Y0"
    policy: str = "none"

    def validate(self) -> None:
        if self.year not in ("Y0", "Y1", "Y2", "Y5", "Y10"):
            raise ConfigError(f"aging.year: unknown year {self.year!r}")
        if self.policy not in ("none", "fast_core_age_first", "balanced"):
            raise ConfigError(f"aging.policy: unknown policy {self.policy!r}")


@dataclass
class MlpConfig:
    epochs: int = 400
    learning_rate: float = 0.05
    class_weight: float | None = None
    threshold: float = 0.5

    def validate(self) -> None:
        if self.epochs < 0:
            raise ConfigError("mlp.epochs: must be >= 0")
        if self.learning_rate <= 0:
            raise ConfigError("mlp.learning_rate: must be positive")
        if not 0.0 <= self.threshold <= 1.0:
            raise ConfigError("mlp.threshold: must lie in [0, 1]")


@dataclass
class DseConfig:
    layer_options: list[int] = field(default_factory=lambda: [1, 2])
    neuron_options: list[int] = field(default_factory=lambda: [4, 8])
    max_parameter_count: int | None = None
    max_mac_cost: int | None = None
    # Exploration budget; None falls back to the mlp section / full data.
    epochs: int | None = None
    learning_rate: float | None = None
    subsample: int | None = None

    def validate(self) -> None:
        if not set(self.layer_options) <= {1, 2}:
            raise ConfigError("dse.layer_options: entries must be 1 or 2")
        if not self.neuron_options or any(n < 1 for n in self.neuron_options):
            raise ConfigError("dse.neuron_options: need positive neuron counts")
        if self.epochs is not None and self.epochs < 0:
            raise ConfigError("dse.epochs: must be >= 0")
        if self.learning_rate is not None and self.learning_rate <= 0:
            raise ConfigError("dse.learning_rate: must be positive")
        if self.subsample is not None and self.subsample < 1:
            raise ConfigError("dse.subsample: must be >= 1")


@dataclass
class TrainDataConfig:
    trace_cycles: int = 20_000
    activations_per_trace: int = 200
    pv_trials: int = 4  # PV draws per (workload, benchmark) cell
    max_samples: int = 150_000
    # Optional per-trial PV range schedule for augmentation; when set it
    # overrides pv.range and pv_trials (one trial per listed range).
    pv_ranges: list[float] | None = None
    pv_distribution: str | None = None  # None: the pv section's distribution

    def validate(self) -> None:
        if self.trace_cycles < 7:
            raise ConfigError("train_data.trace_cycles: must be >= 7")
        if self.pv_trials < 1:
            raise ConfigError("train_data.pv_trials: must be >= 1")
        if self.max_samples < 1:
            raise ConfigError("train_data.max_samples: must be >= 1")
        if self.pv_ranges is not None:
            if not self.pv_ranges:
                raise ConfigError("train_data.pv_ranges: must be non-empty when set")
            if any(not 0.0 <= r <= 0.10 for r in self.pv_ranges):
                raise ConfigError("train_data.pv_ranges: entries must lie in [0, 0.10]")
        if self.pv_distribution is not None and self.pv_distribution not in (
            "gaussian_3sigma", "uniform",
        ):
            raise ConfigError(
                f"train_data.pv_distribution: unknown distribution {self.pv_distribution!r}"
            )


@dataclass
class ExperimentConfig:
    version: int = CONFIG_VERSION
    master_seed: int = 7
    out_dir: str = "runs/default"
    trace: TraceConfig = field(default_factory=TraceConfig)
    workloads: WorkloadConfig = field(default_factory=WorkloadConfig)
    trojan: TrojanConfig = field(default_factory=TrojanConfig)
    adc: AdcConfig = field(default_factory=AdcConfig)
    pv: PvConfig = field(default_factory=PvConfig)
    aging: AgingConfig = field(default_factory=AgingConfig)
    mlp: MlpConfig = field(default_factory=MlpConfig)
    dse: DseConfig = field(default_factory=DseConfig)
    train_data: TrainDataConfig = field(default_factory=TrainDataConfig)
    k_fold: int = 3
    # Rail-loading factor per cross-core workload mix, used by the
    # cross_core_workload sweep. Trusted-core workload stays fixed.
    cross_core_loads: dict[str, float] = field(
        default_factory=lambda: {"idle": 1.0, "add": 1.006, "mul": 1.010, "div": 1.014}
    )

    def validate(self) -> None:
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"version: expected {CONFIG_VERSION}, got {self.version}")
        if self.k_fold < 2:
            raise ConfigError("k_fold: must be >= 2")
        for section in (
            self.trace, self.workloads, self.trojan, self.adc,
            self.pv, self.aging, self.mlp, self.dse, self.train_data,
        ):
            section.validate()

    def to_dict(self) -> dict:
        return asdict(self)


_SECTIONS = {
    "trace": TraceConfig,
    "workloads": WorkloadConfig,
    "trojan": TrojanConfig,
    "adc": AdcConfig,
    "pv": PvConfig,
    "aging": AgingConfig,
    "mlp": MlpConfig,
    "dse": DseConfig,
    "train_data": TrainDataConfig,
}


def config_from_dict(raw: dict) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for key, value in raw.items():
        if key in _SECTIONS:
            if not isinstance(value, dict):
                raise ConfigError(f"{key}: expected a mapping")
            section = _SECTIONS[key]()
            for k, v in value.items():
                if not hasattr(section, k):
                    raise ConfigError(f"{key}.{k}: unknown field")
                setattr(section, k, v)
            setattr(cfg, key, section)
        elif hasattr(cfg, key):
            setattr(cfg, key, value)
        else:
            raise ConfigError(f"{key}: unknown field")
    cfg.validate()
    return cfg


def load_config(path: str | Path, overrides: dict | None = None) -> ExperimentConfig:
    """Load a YAML config; dotted-path overrides take precedence."""
    raw = yaml.safe_load(Path(path).read_text()) or {}
    if not isinstance(raw, dict):
        raise ConfigError("config file must contain a mapping")
    for dotted, value in (overrides or {}).items():
        node = raw
        *parents, leaf = dotted.split(".")
        for p in parents:
            node = node.setdefault(p, {})
        node[leaf] = value
    return config_from_dict(raw)
