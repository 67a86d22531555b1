"""Per-cycle, per-stage power trace generation for a 7-stage pipeline.

The trusted processor is modeled as a LEON3-like in-order pipeline with
seven stages. Every cycle one instruction enters Fetch and the whole
occupancy shifts one stage; a stage's power that cycle is the table value
for the instruction occupying it, plus multiplicative measurement noise.
Hazards, stalls and cache effects are deliberately not modeled.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field
from enum import IntEnum
from importlib import resources

import numpy as np

from .errors import ConfigError, DataError
from .isa import NOP_OPCODE, Workload, build_instruction_table
from .seeding import rng_for

POWER_MODEL_ASSET = "power_model.csv"

N_STAGES = 7

# Default measurement noise: zero-mean Gaussian, sigma as a fraction of the
# nominal power. Represents sensor/environment noise, distinct from PV.
DEFAULT_NOISE_SIGMA = 0.005


class PipelineStage(IntEnum):
    FETCH = 0
    DECODE = 1
    REGISTER_ACCESS = 2
    EXECUTE = 3
    MEMORY = 4
    EXCEPTION = 5
    WRITE = 6


@dataclass(frozen=True)
class StageSpec:
    """One pipeline stage plus the number of hardware components feeding
    its current acquisition block."""

    stage: PipelineStage
    component_count: int

    def __post_init__(self) -> None:
        if self.component_count < 1:
            raise ConfigError(f"component_count must be >= 1 for {self.stage.name}")


# Fetch aggregates I-cache, AHB bus, adder and muxes (4 components, the
# maximum of any stage); the remaining counts are configuration defaults.
DEFAULT_COMPONENT_COUNTS = (4, 2, 2, 2, 2, 1, 1)


def default_stage_profile() -> list[StageSpec]:
    return [StageSpec(PipelineStage(i), c) for i, c in enumerate(DEFAULT_COMPONENT_COUNTS)]


def power_port_count(stages: list[StageSpec]) -> int:
    """Number of power ports a naive one-port-per-component design needs."""
    if not stages:
        raise ConfigError("stage list must be non-empty")
    return sum(s.component_count for s in stages)


@dataclass
class PowerModelTable:
    """Nominal per-(instruction, stage) power in watts.

    ``power[opcode_id, stage]`` holds the nominal watts; row ``NOP_OPCODE``
    doubles as the per-stage idle power.
    """

    power: np.ndarray  # (n_opcodes, 7) float64
    version: str = "1"

    def __post_init__(self) -> None:
        self.power = np.asarray(self.power, dtype=np.float64)
        if self.power.ndim != 2 or self.power.shape[1] != N_STAGES:
            raise DataError("power table must have shape (n_opcodes, 7)")
        if not np.all(np.isfinite(self.power)) or np.any(self.power <= 0):
            raise DataError("all table powers must be strictly positive and finite")

    @property
    def idle_power(self) -> np.ndarray:
        return self.power[NOP_OPCODE]

    def lookup(self, opcode_id: int, stage: PipelineStage) -> float:
        if opcode_id < 0 or opcode_id >= self.power.shape[0]:
            raise DataError(f"opcode {opcode_id} missing from power model table")
        return float(self.power[opcode_id, stage])


def load_default_power_model() -> PowerModelTable:
    """Load the calibrated default power table shipped as a CSV asset."""
    text = resources.files("htscope.data").joinpath(POWER_MODEL_ASSET).read_text()
    rows = list(csv.DictReader(io.StringIO(text)))
    n = max(int(r["opcode_id"]) for r in rows) + 1
    power = np.zeros((n, N_STAGES))
    seen = np.zeros(n, dtype=bool)
    stage_cols = [f"p_{s.name.lower()}" for s in PipelineStage]
    for r in rows:
        op = int(r["opcode_id"])
        power[op] = [float(r[c]) for c in stage_cols]
        seen[op] = True
    table = build_instruction_table()
    missing = [ins.mnemonic for ins in table if not seen[ins.opcode_id]]
    if missing:
        raise DataError(f"power model missing instructions: {missing}")
    return PowerModelTable(power=power)


@dataclass(frozen=True)
class PowerTraceRecord:
    """One clock cycle of a trace: a 7-vector of stage powers, the opcode
    occupying each stage, and the HT ground truth."""

    cycle: int
    stage_power: np.ndarray  # (7,) watts
    instruction_per_stage: np.ndarray  # (7,) opcode ids
    ht_active: bool
    ht_name: str | None = None


@dataclass
class PowerTrace:
    """A whole trace in struct-of-arrays form (records are views)."""

    stage_power: np.ndarray  # (n, 7) float64 watts
    opcode: np.ndarray  # (n, 7) int64
    ht_active: np.ndarray  # (n,) bool
    ht_name: str | None = None
    workload: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.stage_power.shape[0]

    def record(self, i: int) -> PowerTraceRecord:
        active = bool(self.ht_active[i])
        return PowerTraceRecord(
            cycle=i,
            stage_power=self.stage_power[i],
            instruction_per_stage=self.opcode[i],
            ht_active=active,
            ht_name=self.ht_name if active else None,
        )

    def copy(self) -> "PowerTrace":
        return PowerTrace(
            stage_power=self.stage_power.copy(),
            opcode=self.opcode.copy(),
            ht_active=self.ht_active.copy(),
            ht_name=self.ht_name,
            workload=self.workload,
            meta=dict(self.meta),
        )


def simulate_trace(
    workload: Workload,
    model: PowerModelTable,
    cycles: int,
    seed: int,
    noise_sigma: float = DEFAULT_NOISE_SIGMA,
    background_load: float = 1.0,
) -> PowerTrace:
    """Simulate `cycles` cycles of the 7-stage pipeline running a workload.

    The workload stream repeats cyclically and the pipeline starts warm
    (stage s at cycle 0 holds the instruction s slots behind the head), so
    every emitted cycle is steady state. Idle workloads keep every stage on
    the NOP/idle row. ``background_load`` is a static rail-loading factor
    modeling activity of the other IPs on the shared power network.
    """
    if cycles < N_STAGES:
        raise ConfigError("cycles must be >= 7 (pipeline depth)")
    if background_load <= 0:
        raise ConfigError("background_load must be positive")

    ids = np.array([ins.opcode_id for ins in workload.stream], dtype=np.int64)
    t = np.arange(cycles)
    if ids.size == 0:
        opcode = np.full((cycles, N_STAGES), NOP_OPCODE, dtype=np.int64)
    else:
        # opcode[t, s] = stream[(t - s) mod len]: one instruction enters
        # Fetch per cycle and shifts down one stage per cycle.
        idx = (t[:, None] - np.arange(N_STAGES)[None, :]) % ids.size
        opcode = ids[idx]

    if int(opcode.max()) >= model.power.shape[0]:
        bad = int(opcode.max())
        raise DataError(f"opcode {bad} missing from power model table")

    nominal = model.power[opcode, np.arange(N_STAGES)[None, :]] * background_load
    if noise_sigma > 0:
        rng = rng_for(seed, "trace-noise", workload.name, cycles)
        factors = 1.0 + rng.normal(0.0, noise_sigma, size=nominal.shape)
        # Power is physically positive; clamp pathological noise draws.
        np.clip(factors, 1e-3, None, out=factors)
        power = nominal * factors
    else:
        power = nominal

    return PowerTrace(
        stage_power=power,
        opcode=opcode,
        ht_active=np.zeros(cycles, dtype=bool),
        ht_name=None,
        workload=workload.name,
        meta={"seed": seed, "noise_sigma": noise_sigma, "background_load": background_load},
    )


# --- trace export/import -------------------------------------------------

_TRACE_MAGIC = b"HTSTRC"
_TRACE_VERSION = 1


def trace_to_csv(trace: PowerTrace) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    header = (
        ["cycle"]
        + [f"p_{s.name.lower()}" for s in PipelineStage]
        + [f"opcode_{s.name.lower()}" for s in PipelineStage]
        + ["ht_active", "ht_name"]
    )
    writer.writerow(header)
    for i in range(len(trace)):
        active = bool(trace.ht_active[i])
        writer.writerow(
            [i]
            + [repr(float(v)) for v in trace.stage_power[i]]
            + [int(v) for v in trace.opcode[i]]
            + [int(active), trace.ht_name if active and trace.ht_name else ""]
        )
    return out.getvalue()


def trace_from_csv(text: str) -> PowerTrace:
    rows = list(csv.DictReader(io.StringIO(text)))
    n = len(rows)
    power = np.zeros((n, N_STAGES))
    opcode = np.zeros((n, N_STAGES), dtype=np.int64)
    active = np.zeros(n, dtype=bool)
    name = None
    for i, r in enumerate(rows):
        for s in PipelineStage:
            power[i, s] = float(r[f"p_{s.name.lower()}"])
            opcode[i, s] = int(r[f"opcode_{s.name.lower()}"])
        active[i] = bool(int(r["ht_active"]))
        if r["ht_name"]:
            name = r["ht_name"]
    return PowerTrace(stage_power=power, opcode=opcode, ht_active=active, ht_name=name)


def trace_to_bytes(trace: PowerTrace) -> bytes:
    """Compact binary framing: magic, version, cycle count, ht name, then
    little-endian float64 powers, int64 opcodes and uint8 flags."""
    name = (trace.ht_name or "").encode("utf-8")
    head = _TRACE_MAGIC + struct.pack("<HQH", _TRACE_VERSION, len(trace), len(name)) + name
    body = (
        trace.stage_power.astype("<f8").tobytes()
        + trace.opcode.astype("<i8").tobytes()
        + trace.ht_active.astype(np.uint8).tobytes()
    )
    return head + body


def trace_from_bytes(buf: bytes) -> PowerTrace:
    if buf[:6] != _TRACE_MAGIC:
        raise DataError("not a trace frame")
    version, n, namelen = struct.unpack_from("<HQH", buf, 6)
    if version != _TRACE_VERSION:
        raise DataError(f"unsupported trace frame version {version}")
    off = 6 + 12
    name = buf[off : off + namelen].decode("utf-8") or None
    off += namelen
    power = np.frombuffer(buf, dtype="<f8", count=n * N_STAGES, offset=off).reshape(n, N_STAGES)
    off += n * N_STAGES * 8
    opcode = np.frombuffer(buf, dtype="<i8", count=n * N_STAGES, offset=off).reshape(n, N_STAGES)
    off += n * N_STAGES * 8
    active = np.frombuffer(buf, dtype=np.uint8, count=n, offset=off).astype(bool)
    return PowerTrace(
        stage_power=power.copy(), opcode=opcode.copy(), ht_active=active, ht_name=name
    )
