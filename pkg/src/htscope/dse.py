"""Design-space exploration over MLP topologies.

Trains every (layers, neurons) grid point with k-fold validation, records
accuracy / MCC / parameter count / per-inference cost, and selects the
deployment topology: best mean accuracy among the configurations that meet
the overhead constraints, ties broken toward the smaller model.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .detector import Hyper, MlpTopology, TrainingSet, k_fold_validate
from .errors import ConstraintError, TrainingError

DEFAULT_NEURON_OPTIONS = (4, 8, 16, 32, 64, 100)


@dataclass
class DseResult:
    topology: MlpTopology
    accuracy: float
    mcc: float | None
    parameter_count: int
    mac_cost: int
    scenario_set: str = "all"


@dataclass
class DseGrid:
    layer_options: tuple[int, ...] = (1, 2)
    neuron_options: tuple[int, ...] = DEFAULT_NEURON_OPTIONS
    results: list[DseResult] = field(default_factory=list)

    def topologies(self) -> list[MlpTopology]:
        return [
            MlpTopology(hidden_layers=l, neurons_per_layer=n)
            for l in self.layer_options
            for n in self.neuron_options
        ]


def explore(
    data: TrainingSet,
    grid: DseGrid,
    hyper: Hyper,
    k: int = 3,
    scenario_set: str = "all",
) -> DseGrid:
    """Fill a grid with mean k-fold accuracy and MCC per configuration."""
    grid.results = []
    for topo in grid.topologies():
        try:
            reports = k_fold_validate(data, topo, k, hyper)
        except TrainingError as exc:
            raise TrainingError(
                f"training failed for MLP({topo.hidden_layers}, "
                f"{topo.neurons_per_layer}): {exc}"
            ) from exc
        accs = [r.accuracy for r in reports]
        mccs = [r.mcc for r in reports if r.mcc is not None]
        grid.results.append(
            DseResult(
                topology=topo,
                accuracy=float(np.mean(accs)),
                mcc=float(np.mean(mccs)) if mccs else None,
                parameter_count=topo.parameter_count(),
                mac_cost=topo.mac_count(),
                scenario_set=scenario_set,
            )
        )
    return grid


def select(
    grid: DseGrid,
    max_parameter_count: int | None = None,
    max_mac_cost: int | None = None,
) -> MlpTopology:
    """Pick the feasible configuration with the highest accuracy.

    Ties go to the smaller parameter count, then to fewer layers.
    """
    if not grid.results:
        raise ConstraintError("grid has no results; run explore first")
    feasible = [
        r
        for r in grid.results
        if (max_parameter_count is None or r.parameter_count <= max_parameter_count)
        and (max_mac_cost is None or r.mac_cost <= max_mac_cost)
    ]
    if not feasible:
        limits = []
        if max_parameter_count is not None:
            limits.append(f"max_parameter_count={max_parameter_count}")
        if max_mac_cost is not None:
            limits.append(f"max_mac_cost={max_mac_cost}")
        raise ConstraintError(f"no configuration satisfies {', '.join(limits)}")
    best = max(
        feasible,
        key=lambda r: (r.accuracy, -r.parameter_count, -r.topology.hidden_layers),
    )
    return best.topology


def grid_to_csv(grid: DseGrid) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(
        ["hidden_layers", "neurons_per_layer", "scenario_set", "accuracy", "mcc",
         "parameter_count", "mac_cost"]
    )
    for r in grid.results:
        writer.writerow(
            [
                r.topology.hidden_layers,
                r.topology.neurons_per_layer,
                r.scenario_set,
                repr(r.accuracy),
                "undefined" if r.mcc is None else repr(r.mcc),
                r.parameter_count,
                r.mac_cost,
            ]
        )
    return out.getvalue()
