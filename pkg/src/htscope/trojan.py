"""Hardware-Trojan power signatures and trace injection.

A Trojan is modeled as a multiplicative perturbation of the trusted core's
shared power rail: per-stage relative deltas, modulated by a per-category
sensitivity of the instruction occupying each stage, applied inside
activation windows chosen by a trigger process. The shipped catalog carries
one signature per named Trust-Hub-style benchmark, with disjoint train and
eval splits.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .errors import ConfigError, DomainError
from .isa import InstructionCategory, category_by_opcode
from .soc_power import N_STAGES, PowerTrace
from .seeding import rng_for

CATALOG_ASSET = "trojan_catalog.json"

# Observed envelope for the dominant relative power deviation of catalog
# signatures: 1% to 35%.
DELTA_ENVELOPE = (0.01, 0.35)


@dataclass(frozen=True)
class TriggerSpec:
    """How activation windows are placed in a trace.

    ``fixed_count`` places exactly ``target_activations`` non-overlapping
    windows; ``bernoulli`` starts a window with ``per_cycle_probability``
    whenever no window is active.
    """

    mode: str = "fixed_count"
    target_activations: int = 0
    per_cycle_probability: float = 0.0
    seed: int = 0

    def __post_init__(self) -> None:
        if self.mode not in ("fixed_count", "bernoulli"):
            raise ConfigError(f"unknown trigger mode {self.mode!r}")
        if self.target_activations < 0:
            raise ConfigError("target_activations must be non-negative")
        if not 0.0 <= self.per_cycle_probability <= 1.0:
            raise ConfigError("per_cycle_probability must be in [0, 1]")


@dataclass
class TrojanModel:
    """Parameterized power signature of one HT benchmark."""

    name: str
    stage_delta: np.ndarray  # (7,) relative deltas, fraction of nominal
    instruction_sensitivity: dict[InstructionCategory, float]
    trigger: TriggerSpec
    duration_cycles: int
    split: str = "eval"  # "train" or "eval"

    def __post_init__(self) -> None:
        self.stage_delta = np.asarray(self.stage_delta, dtype=np.float64)
        if self.stage_delta.shape != (N_STAGES,):
            raise ConfigError(f"{self.name}: stage_delta must be a 7-vector")
        if self.duration_cycles < 2:
            raise ConfigError(f"{self.name}: activation spans at least 2 cycles")
        if self.split not in ("train", "eval"):
            raise ConfigError(f"{self.name}: split must be 'train' or 'eval'")

    def sensitivity_vector(self) -> np.ndarray:
        """Sensitivity indexed by category value (index 0 unused)."""
        vec = np.zeros(len(InstructionCategory) + 1)
        for cat, s in self.instruction_sensitivity.items():
            vec[int(cat)] = s
        return vec

    def dominant_delta(self) -> float:
        """Largest |delta * sensitivity| over all (stage, category) pairs."""
        sens = np.array([self.instruction_sensitivity[c] for c in InstructionCategory])
        return float(np.max(np.abs(self.stage_delta[:, None] * sens[None, :])))

    def with_trigger(self, trigger: TriggerSpec) -> "TrojanModel":
        return TrojanModel(
            name=self.name,
            stage_delta=self.stage_delta.copy(),
            instruction_sensitivity=dict(self.instruction_sensitivity),
            trigger=trigger,
            duration_cycles=self.duration_cycles,
            split=self.split,
        )


@dataclass(frozen=True)
class Scenario:
    """One experiment scenario: S0 is clean, S1..S7 each activate one HT."""

    id: str
    active_trojans: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self) -> None:
        if self.id == "S0" and self.active_trojans:
            raise ConfigError("S0 must have no active Trojans")
        if self.id != "S0" and self.id.startswith("S") and len(self.active_trojans) != 1:
            raise ConfigError(f"{self.id} must activate exactly one Trojan")


def _fixed_count_windows(n: int, count: int, duration: int, rng: np.random.Generator) -> np.ndarray:
    """Starts of `count` non-overlapping windows of `duration` in [0, n)."""
    if count * duration > n:
        raise ConfigError(
            f"cannot fit {count} activation windows of {duration} cycles in {n} cycles"
        )
    if count == 0:
        return np.empty(0, dtype=np.int64)
    # Gap method: sample positions in the shrunk index space, then re-expand
    # so windows cannot overlap.
    shrunk = n - count * (duration - 1)
    pos = np.sort(rng.choice(shrunk, size=count, replace=False))
    return pos + np.arange(count) * (duration - 1)


def _bernoulli_windows(n: int, p: float, duration: int, rng: np.random.Generator) -> np.ndarray:
    starts = []
    t = 0
    draws = rng.random(n)
    while t < n:
        if draws[t] < p and t + duration <= n:
            starts.append(t)
            t += duration
        else:
            t += 1
    return np.asarray(starts, dtype=np.int64)


def activation_windows(trace_len: int, model: TrojanModel) -> np.ndarray:
    rng = rng_for(model.trigger.seed, "trigger", model.name, trace_len)
    if model.trigger.mode == "fixed_count":
        return _fixed_count_windows(
            trace_len, model.trigger.target_activations, model.duration_cycles, rng
        )
    return _bernoulli_windows(
        trace_len, model.trigger.per_cycle_probability, model.duration_cycles, rng
    )


def inject(trace: PowerTrace, model: TrojanModel) -> PowerTrace:
    """Apply a Trojan signature to a nominal trace.

    Inside each activation window, stage power is multiplied by
    ``1 + stage_delta[s] * sensitivity[category of instruction in s]``;
    cycles outside windows are untouched.
    """
    if trace.ht_active.any():
        raise ConfigError("inject expects a nominal trace (no prior HT marks)")
    n = len(trace)
    starts = activation_windows(n, model)
    out = trace.copy()
    out.ht_name = model.name
    if starts.size == 0:
        return out

    mask = np.zeros(n, dtype=bool)
    idx = (starts[:, None] + np.arange(model.duration_cycles)[None, :]).ravel()
    mask[idx] = True

    sens = model.sensitivity_vector()
    cats = category_by_opcode()[out.opcode[mask]]
    factor = 1.0 + model.stage_delta[None, :] * sens[cats]
    out.stage_power[mask] = out.stage_power[mask] * factor
    out.ht_active = mask
    return out


def delta_p_metric(nominal_power: float, scenario_power: float) -> float:
    """Relative power deviation of a scenario vs the clean scenario.

    Negative when the Trojan adds power.
    """
    if nominal_power <= 0:
        raise DomainError("nominal power must be positive")
    return (abs(nominal_power) - abs(scenario_power)) / abs(nominal_power)


def catalog() -> dict[str, TrojanModel]:
    """Load the shipped benchmark signature catalog.

    Training and evaluation splits are disjoint by construction; triggers
    default to fixed_count with zero activations and are overridden per
    experiment.
    """
    text = resources.files("htscope.data").joinpath(CATALOG_ASSET).read_text()
    raw = json.loads(text)
    models: dict[str, TrojanModel] = {}
    for entry in raw["benchmarks"]:
        models[entry["name"]] = TrojanModel(
            name=entry["name"],
            stage_delta=np.array(entry["stage_delta"], dtype=np.float64),
            instruction_sensitivity={
                InstructionCategory[k.upper()]: float(v)
                for k, v in entry["instruction_sensitivity"].items()
            },
            trigger=TriggerSpec(),
            duration_cycles=int(entry["duration_cycles"]),
            split=entry["split"],
        )
    train = {m.name for m in models.values() if m.split == "train"}
    ev = {m.name for m in models.values() if m.split == "eval"}
    if train & ev:
        raise ConfigError("catalog train and eval splits overlap")
    return models
