"""Instruction set abstraction and synthetic workload generation.

The processor model only cares about instruction identity and category, not
semantics. Instructions are grouped into the five SPARC V8 categories
(load/store, arithmetic/logical/shift, control transfer, register read/write,
floating point). The instruction table is a versioned CSV asset shipped with
the package so opcode encodings stay stable across runs.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from enum import IntEnum
from importlib import resources

import numpy as np

from .errors import ConfigError
from .seeding import rng_for

INSTRUCTION_TABLE_ASSET = "instruction_table.csv"

# Reserved opcode for the pipeline-bubble / idle instruction.
NOP_OPCODE = 0


class InstructionCategory(IntEnum):
    """The five SPARC V8 instruction categories."""

    CAT1 = 1  # load/store
    CAT2 = 2  # arithmetic/logical/shift
    CAT3 = 3  # control transfer
    CAT4 = 4  # register read/write
    CAT5 = 5  # floating point


@dataclass(frozen=True)
class Instruction:
    mnemonic: str
    opcode_id: int
    category: InstructionCategory


@dataclass(frozen=True)
class Workload:
    """A named, seeded instruction stream. Idle workloads have empty streams."""

    name: str
    stream: tuple[Instruction, ...]
    seed: int


def build_instruction_table() -> list[Instruction]:
    """Load the fixed, versioned instruction table shipped with the package.

    Order and opcode ids are deterministic: they come straight from the CSV
    asset, which is never regenerated at run time.
    """
    text = resources.files("htscope.data").joinpath(INSTRUCTION_TABLE_ASSET).read_text()
    table = []
    for row in csv.DictReader(io.StringIO(text)):
        table.append(
            Instruction(
                mnemonic=row["mnemonic"],
                opcode_id=int(row["opcode_id"]),
                category=InstructionCategory[row["category"].upper()],
            )
        )
    ids = [ins.opcode_id for ins in table]
    if len(set(ids)) != len(ids):
        raise ConfigError("instruction table contains duplicate opcode_ids")
    return table


def serialize_instruction_table(table: list[Instruction]) -> str:
    """Canonical CSV form of a table (used to check table stability)."""
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["mnemonic", "opcode_id", "category"])
    for ins in table:
        writer.writerow([ins.mnemonic, ins.opcode_id, ins.category.name])
    return out.getvalue()


def category_by_opcode(table: list[Instruction] | None = None) -> np.ndarray:
    """Dense opcode -> category lookup array."""
    if table is None:
        table = build_instruction_table()
    arr = np.zeros(max(ins.opcode_id for ins in table) + 1, dtype=np.int64)
    for ins in table:
        arr[ins.opcode_id] = int(ins.category)
    return arr


# Default per-workload category mixes. The add/sub/mul/div programs are
# dominated by arithmetic with supporting loads/stores and bookkeeping;
# div additionally emits its Cat2 instructions in longer runs (iterative
# divide inner loops) without changing the overall mix.
DEFAULT_WORKLOAD_MIXES: dict[str, dict[InstructionCategory, float]] = {
    name: {
        InstructionCategory.CAT1: 0.30,
        InstructionCategory.CAT2: 0.40,
        InstructionCategory.CAT3: 0.10,
        InstructionCategory.CAT4: 0.15,
        InstructionCategory.CAT5: 0.05,
    }
    for name in ("add", "sub", "mul", "div")
}

# Mean run length of Cat2 instructions per workload (1 = fully i.i.d.).
DEFAULT_RUN_LENGTHS: dict[str, int] = {"add": 1, "sub": 1, "mul": 1, "div": 4}


def generate_workload(
    name: str,
    length: int,
    seed: int,
    mixes: dict[str, dict[InstructionCategory, float]] | None = None,
    table: list[Instruction] | None = None,
) -> Workload:
    """Generate a deterministic synthetic instruction stream for a workload.

    The category mix follows the configured distribution for the workload
    name; instructions within a category are drawn uniformly. ``idle``
    produces an empty stream.
    """
    if name == "idle":
        return Workload(name=name, stream=(), seed=seed)
    mixes = mixes if mixes is not None else DEFAULT_WORKLOAD_MIXES
    if name not in mixes:
        raise ConfigError(f"unknown workload name: {name!r}")
    if length < 1:
        raise ConfigError("length must be >= 1 for non-idle workloads")
    mix = mixes[name]
    if table is None:
        table = build_instruction_table()
    by_cat: dict[InstructionCategory, list[Instruction]] = {c: [] for c in InstructionCategory}
    for ins in table:
        if ins.opcode_id != NOP_OPCODE:
            by_cat[ins.category].append(ins)

    cats = list(mix.keys())
    probs = np.array([mix[c] for c in cats], dtype=float)
    probs /= probs.sum()

    run_len = DEFAULT_RUN_LENGTHS.get(name, 1)
    # Adjust the draw probability of Cat2 so that run-lengthened emission
    # still hits the configured overall fraction.
    draw_probs = probs.copy()
    if run_len > 1:
        i2 = cats.index(InstructionCategory.CAT2)
        p2 = probs[i2]
        q2 = p2 / (p2 + (1.0 - p2) * run_len)
        scale = (1.0 - q2) / (1.0 - p2)
        draw_probs = probs * scale
        draw_probs[i2] = q2

    rng = rng_for(seed, "workload", name, length)
    stream: list[Instruction] = []
    while len(stream) < length:
        cat = cats[rng.choice(len(cats), p=draw_probs)]
        reps = 1
        if run_len > 1 and cat == InstructionCategory.CAT2:
            reps = int(rng.integers(max(2, run_len - 2), run_len + 3))
        for _ in range(reps):
            if len(stream) >= length:
                break
            pool = by_cat[cat]
            stream.append(pool[rng.integers(len(pool))])
    return Workload(name=name, stream=tuple(stream), seed=seed)
