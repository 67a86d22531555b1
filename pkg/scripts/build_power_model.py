#!/usr/bin/env python3
"""Regenerate src/htscope/data/power_model.csv.

The LD row is the measured anchor; every other instruction is the anchor
scaled by a per-category, per-stage factor plus a small deterministic
per-instruction offset. Edit the factor matrix here and re-run to recalibrate.
"""

import csv
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).resolve().parents[1] / "src"))

from htscope.isa import InstructionCategory, build_instruction_table  # noqa: E402

# Measured per-stage anchor for LD (watts): Fetch, Decode, RegisterAccess,
# Execute, Memory, Exception, Write.
LD_ANCHOR = [0.086649, 0.027123, 0.027238, 0.013182, 0.015111, 0.012424, 0.059794]

# Category scaling relative to the LD anchor, per stage.
CATEGORY_FACTORS = {
    InstructionCategory.CAT1: [1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00],
    InstructionCategory.CAT2: [0.92, 1.05, 0.95, 1.30, 0.70, 0.95, 0.85],
    InstructionCategory.CAT3: [1.05, 1.10, 0.85, 0.80, 0.65, 1.10, 0.70],
    InstructionCategory.CAT4: [0.88, 0.90, 1.20, 0.75, 0.60, 0.90, 0.80],
    InstructionCategory.CAT5: [0.95, 1.00, 0.90, 1.55, 0.65, 1.00, 0.90],
}

# Idle/NOP row relative to the LD anchor.
IDLE_FACTOR = 0.55

# Per-instruction deterministic spread within a category (fractional).
JITTER = 0.02

ANCHOR_MNEMONIC = "LD"

OUT = pathlib.Path(__file__).resolve().parents[1] / "src" / "htscope" / "data" / "power_model.csv"


def main() -> None:
    table = build_instruction_table()
    anchor = np.array(LD_ANCHOR)
    rng = np.random.default_rng(20240817)
    rows = []
    for ins in table:
        if ins.mnemonic == "NOP":
            row = anchor * IDLE_FACTOR
        elif ins.mnemonic == ANCHOR_MNEMONIC:
            row = anchor.copy()
        else:
            factors = np.array(CATEGORY_FACTORS[ins.category])
            tweak = 1.0 + rng.uniform(-JITTER, JITTER)
            row = anchor * factors * tweak
        rows.append((ins.mnemonic, ins.opcode_id, row))

    with OUT.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(
            ["mnemonic", "opcode_id", "p_fetch", "p_decode", "p_register_access",
             "p_execute", "p_memory", "p_exception", "p_write"]
        )
        for mnem, op, row in rows:
            writer.writerow([mnem, op] + [f"{v:.6e}" for v in row])
    print(f"wrote {OUT} ({len(rows)} rows)")


if __name__ == "__main__":
    main()
