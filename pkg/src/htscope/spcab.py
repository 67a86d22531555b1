"""Single power-port current acquisition model.

Two halves live here: the offline current-mirror sizing arithmetic used to
dimension the modeled sensor (and feed the area report), and the run-time
acquisition path that round-robins over the seven stage acquisition blocks,
quantizes through a modeled ADC, and emits the serialized feature stream the
detector actually sees. Mirror sizing never alters acquired values; correctly
sized mirrors copy currents ideally.
"""

from __future__ import annotations

import csv
import io
import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DomainError
from .isa import InstructionCategory, category_by_opcode
from .soc_power import N_STAGES, PipelineStage, PowerModelTable, PowerTrace, StageSpec

# --- current-mirror sizing ----------------------------------------------


def scale_factors(branch_currents: list[float] | np.ndarray) -> np.ndarray:
    """Per-branch scale factor: each current divided by the largest one.

    Results lie in (0, 1] and the max-current branch maps to exactly 1, so
    mirrored widths never exceed the base width.
    """
    currents = np.asarray(branch_currents, dtype=np.float64)
    if currents.size == 0:
        raise DomainError("branch current list must be non-empty")
    if np.any(currents <= 0) or not np.all(np.isfinite(currents)):
        raise DomainError("branch currents must be positive and finite")
    return currents / currents.max()


def mirrored_widths(base_width: float, sf: list[float] | np.ndarray) -> np.ndarray:
    """Mirror-branch nMOS widths: scale factor times the parent width."""
    if base_width <= 0:
        raise DomainError("base width must be positive")
    sf = np.asarray(sf, dtype=np.float64)
    if np.any(sf <= 0) or np.any(sf > 1):
        raise DomainError("scale factors must lie in (0, 1]")
    return base_width * sf


def collector_width(min_nmos_width: float, mobility_ratio: float, component_count: int) -> float:
    """Width of the shared pMOS collector for a stage with c components."""
    if component_count <= 0:
        raise DomainError("component count must be positive")
    if min_nmos_width <= 0 or mobility_ratio <= 0:
        raise DomainError("width and mobility ratio must be positive")
    return (mobility_ratio * min_nmos_width) / component_count


@dataclass
class MirrorSizing:
    """Sizing solution for one stage's acquisition block."""

    stage: PipelineStage
    branch_currents: np.ndarray  # amperes per component
    base_width: float  # um
    scale_factors: np.ndarray
    mirrored_widths: np.ndarray  # um
    collector_width: float  # um
    mobility_ratio: float
    min_nmos_width: float  # um
    component_count: int


def size_stage(
    stage: StageSpec,
    branch_currents: list[float],
    base_width: float,
    mobility_ratio: float,
    min_nmos_width: float,
) -> MirrorSizing:
    if len(branch_currents) != stage.component_count:
        raise ConfigError(
            f"{stage.stage.name}: expected {stage.component_count} branch currents, "
            f"got {len(branch_currents)}"
        )
    sf = scale_factors(branch_currents)
    return MirrorSizing(
        stage=stage.stage,
        branch_currents=np.asarray(branch_currents, dtype=np.float64),
        base_width=base_width,
        scale_factors=sf,
        mirrored_widths=mirrored_widths(base_width, sf),
        collector_width=collector_width(min_nmos_width, mobility_ratio, stage.component_count),
        mobility_ratio=mobility_ratio,
        min_nmos_width=min_nmos_width,
        component_count=stage.component_count,
    )


# --- ADC and acquisition -------------------------------------------------


@dataclass(frozen=True)
class AdcSpec:
    """Ideal quantizing ADC sampling one stage per clock."""

    bits: int = 10
    full_scale: float = 0.2  # watts
    sample_period_cycles: int = 1

    def __post_init__(self) -> None:
        if self.bits < 1:
            raise ConfigError("ADC bits must be >= 1")
        if self.full_scale <= 0:
            raise ConfigError("ADC full scale must be positive")
        if self.sample_period_cycles < 1:
            raise ConfigError("sample period must be >= 1 cycle")

    @property
    def step(self) -> float:
        return self.full_scale / (1 << self.bits)

    def quantize(self, power: np.ndarray) -> np.ndarray:
        q = np.round(np.asarray(power, dtype=np.float64) / self.step) * self.step
        return np.clip(q, 0.0, self.full_scale)


def default_adc(model: PowerModelTable, bits: int = 10) -> AdcSpec:
    """Size the ADC so a 5% change on any nominal stage power moves the
    quantized output by at least one step: full scale twice the largest
    table entry."""
    return AdcSpec(bits=bits, full_scale=2.0 * float(model.power.max()))


@dataclass(frozen=True)
class SampledFeature:
    """One TDM-acquired sample: quantized power plus instruction identity.

    ``ground_truth`` is carried for evaluation only and never reaches the
    detector inputs.
    """

    cycle: int
    stage: PipelineStage
    quantized_power: float
    opcode_id: int
    category: InstructionCategory
    ground_truth: bool


@dataclass
class FeatureStream:
    """A sampled feature sequence in struct-of-arrays form."""

    cycle: np.ndarray  # (n,) int64
    stage: np.ndarray  # (n,) int64 (PipelineStage values)
    power: np.ndarray  # (n,) float64, post-ADC watts
    opcode: np.ndarray  # (n,) int64
    category: np.ndarray  # (n,) int64 (InstructionCategory values)
    ground_truth: np.ndarray  # (n,) bool
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.power.shape[0]

    def record(self, i: int) -> SampledFeature:
        return SampledFeature(
            cycle=int(self.cycle[i]),
            stage=PipelineStage(int(self.stage[i])),
            quantized_power=float(self.power[i]),
            opcode_id=int(self.opcode[i]),
            category=InstructionCategory(int(self.category[i])),
            ground_truth=bool(self.ground_truth[i]),
        )

    @staticmethod
    def concatenate(parts: list["FeatureStream"]) -> "FeatureStream":
        return FeatureStream(
            cycle=np.concatenate([p.cycle for p in parts]),
            stage=np.concatenate([p.stage for p in parts]),
            power=np.concatenate([p.power for p in parts]),
            opcode=np.concatenate([p.opcode for p in parts]),
            category=np.concatenate([p.category for p in parts]),
            ground_truth=np.concatenate([p.ground_truth for p in parts]),
        )

    def subset(self, idx: np.ndarray) -> "FeatureStream":
        return FeatureStream(
            cycle=self.cycle[idx],
            stage=self.stage[idx],
            power=self.power[idx],
            opcode=self.opcode[idx],
            category=self.category[idx],
            ground_truth=self.ground_truth[idx],
        )


def acquire(
    trace: PowerTrace,
    adc: AdcSpec,
    start_stage: PipelineStage = PipelineStage.FETCH,
) -> FeatureStream:
    """Serialize a trace through the single-port time-multiplexed sensor.

    Exactly one sample is emitted per trace cycle; the sampled stage advances
    round-robin from ``start_stage``, so each stage is visited once per seven
    cycles. Power is quantized to the ADC step and clamped to full scale.
    """
    n = len(trace)
    if n == 0:
        raise ConfigError("trace must be non-empty")
    t = np.arange(n)
    stages = (int(start_stage) + t) % N_STAGES
    power = trace.stage_power[t, stages]
    opcode = trace.opcode[t, stages]
    cats = category_by_opcode()[opcode]
    return FeatureStream(
        cycle=t,
        stage=stages.astype(np.int64),
        power=adc.quantize(power),
        opcode=opcode.astype(np.int64),
        category=cats.astype(np.int64),
        ground_truth=trace.ht_active.copy(),
        meta={"ht_name": trace.ht_name, "workload": trace.workload},
    )


# --- feature stream export/import ---------------------------------------

_FEAT_MAGIC = b"HTSFEA"
_FEAT_VERSION = 1


def features_to_csv(stream: FeatureStream) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["cycle", "stage", "power", "opcode", "category", "ground_truth"])
    for i in range(len(stream)):
        writer.writerow(
            [
                int(stream.cycle[i]),
                PipelineStage(int(stream.stage[i])).name,
                repr(float(stream.power[i])),
                int(stream.opcode[i]),
                int(stream.category[i]),
                int(bool(stream.ground_truth[i])),
            ]
        )
    return out.getvalue()


def features_from_csv(text: str) -> FeatureStream:
    rows = list(csv.DictReader(io.StringIO(text)))
    n = len(rows)
    stream = FeatureStream(
        cycle=np.zeros(n, dtype=np.int64),
        stage=np.zeros(n, dtype=np.int64),
        power=np.zeros(n),
        opcode=np.zeros(n, dtype=np.int64),
        category=np.zeros(n, dtype=np.int64),
        ground_truth=np.zeros(n, dtype=bool),
    )
    for i, r in enumerate(rows):
        stream.cycle[i] = int(r["cycle"])
        stream.stage[i] = int(PipelineStage[r["stage"]])
        stream.power[i] = float(r["power"])
        stream.opcode[i] = int(r["opcode"])
        stream.category[i] = int(r["category"])
        stream.ground_truth[i] = bool(int(r["ground_truth"]))
    return stream


def features_to_bytes(stream: FeatureStream) -> bytes:
    head = _FEAT_MAGIC + struct.pack("<HQ", _FEAT_VERSION, len(stream))
    body = (
        stream.cycle.astype("<i8").tobytes()
        + stream.stage.astype("<i8").tobytes()
        + stream.power.astype("<f8").tobytes()
        + stream.opcode.astype("<i8").tobytes()
        + stream.category.astype("<i8").tobytes()
        + stream.ground_truth.astype(np.uint8).tobytes()
    )
    return head + body


def features_from_bytes(buf: bytes) -> FeatureStream:
    if buf[:6] != _FEAT_MAGIC:
        raise ConfigError("not a feature frame")
    version, n = struct.unpack_from("<HQ", buf, 6)
    if version != _FEAT_VERSION:
        raise ConfigError(f"unsupported feature frame version {version}")
    off = 6 + 10
    arrays = []
    for dtype in ("<i8", "<i8", "<f8", "<i8", "<i8"):
        arrays.append(np.frombuffer(buf, dtype=dtype, count=n, offset=off).copy())
        off += n * 8
    truth = np.frombuffer(buf, dtype=np.uint8, count=n, offset=off).astype(bool)
    return FeatureStream(
        cycle=arrays[0],
        stage=arrays[1],
        power=arrays[2],
        opcode=arrays[3],
        category=arrays[4],
        ground_truth=truth,
    )


def sizing_report(
    stages: list[StageSpec],
    branch_currents: dict[str, list[float]],
    base_width: float = 10.0,
    mobility_ratio: float = 2.0,
    min_nmos_width: float = 0.5,
    area_per_um: float = 0.12,
) -> dict:
    """Offline sizing summary for the whole sensor: per-stage widths, the
    naive multi-port count versus the single external port, and an estimated
    area from a configured area-per-width coefficient."""
    from .soc_power import power_port_count

    per_stage = []
    total_width = 0.0
    for spec in stages:
        sizing = size_stage(
            spec, branch_currents[spec.stage.name], base_width, mobility_ratio, min_nmos_width
        )
        width_sum = float(sizing.mirrored_widths.sum() + sizing.collector_width)
        total_width += width_sum
        per_stage.append(
            {
                "stage": spec.stage.name,
                "component_count": spec.component_count,
                "branch_currents_A": [float(v) for v in sizing.branch_currents],
                "scale_factors": [float(v) for v in sizing.scale_factors],
                "mirrored_widths_um": [float(v) for v in sizing.mirrored_widths],
                "collector_width_um": sizing.collector_width,
            }
        )
    naive_ports = power_port_count(stages)
    return {
        "stages": per_stage,
        "naive_power_ports": naive_ports,
        "single_port_design_ports": 1,
        "port_reduction_ratio": naive_ports / 1.0,
        "estimated_sensor_area_um2": total_width * area_per_um,
    }
