import numpy as np
import pytest

from htscope.detector import Hyper, MlpTopology, TrainingSet, k_fold_validate
from htscope.dse import DseGrid, DseResult, explore, grid_to_csv, select
from htscope.errors import ConstraintError
from htscope.spcab import FeatureStream


def _toy_set(n=240, seed=0):
    rng = np.random.default_rng(seed)
    power = np.concatenate([rng.normal(0.1, 0.02, n // 2), rng.normal(0.9, 0.02, n // 2)])
    labels = np.concatenate([np.zeros(n // 2, bool), np.ones(n // 2, bool)])
    stream = FeatureStream(
        cycle=np.arange(n),
        stage=np.arange(n) % 7,
        power=power,
        opcode=np.ones(n, dtype=np.int64),
        category=np.full(n, 2, dtype=np.int64),
        ground_truth=labels,
    )
    return TrainingSet.from_stream(stream)


def _result(layers, neurons, acc, mcc=0.5):
    topo = MlpTopology(layers, neurons)
    return DseResult(
        topology=topo,
        accuracy=acc,
        mcc=mcc,
        parameter_count=topo.parameter_count(),
        mac_cost=topo.mac_count(),
    )


def test_grid_topologies_cartesian():
    grid = DseGrid(layer_options=(1, 2), neuron_options=(4, 8))
    topos = grid.topologies()
    assert len(topos) == 4
    assert MlpTopology(2, 8) in topos


def test_singleton_grid_reduces_to_k_fold():
    data = _toy_set()
    hyper = Hyper(epochs=30)
    grid = explore(data, DseGrid(layer_options=(1,), neuron_options=(4,)), hyper, k=3)
    assert len(grid.results) == 1
    reports = k_fold_validate(data, MlpTopology(1, 4), 3, hyper)
    expected = float(np.mean([r.accuracy for r in reports]))
    assert grid.results[0].accuracy == pytest.approx(expected)


def test_explore_fills_costs_exactly():
    data = _toy_set()
    grid = explore(
        data, DseGrid(layer_options=(1, 2), neuron_options=(4,)), Hyper(epochs=10), k=2
    )
    for r in grid.results:
        assert r.parameter_count == r.topology.parameter_count()
        assert r.mac_cost == r.topology.mac_count()


def test_select_prefers_accuracy_then_smaller_model():
    grid = DseGrid()
    grid.results = [_result(2, 8, 0.97), _result(1, 4, 0.95)]
    assert select(grid) == MlpTopology(2, 8)
    # Equal accuracy: the smaller parameter count wins.
    grid.results = [_result(2, 32, 0.97), _result(2, 8, 0.97)]
    assert select(grid) == MlpTopology(2, 8)


def test_select_tie_breaks_toward_fewer_layers():
    # Same accuracy and (forced) equal parameter count: fewer layers wins.
    a = _result(1, 8, 0.96)
    b = _result(2, 8, 0.96)
    b.parameter_count = a.parameter_count
    grid = DseGrid()
    grid.results = [b, a]
    assert select(grid) == MlpTopology(1, 8)


def test_select_respects_constraints():
    grid = DseGrid()
    grid.results = [_result(2, 8, 0.98), _result(1, 4, 0.90)]
    assert select(grid, max_parameter_count=100) == MlpTopology(1, 4)
    with pytest.raises(ConstraintError):
        select(grid, max_parameter_count=10)
    with pytest.raises(ConstraintError):
        select(DseGrid())


def test_select_matches_brute_force_scan():
    rng = np.random.default_rng(3)
    grid = DseGrid()
    grid.results = [
        _result(l, n, float(rng.uniform(0.8, 0.99)))
        for l in (1, 2)
        for n in (4, 8, 16)
    ]
    chosen = select(grid)
    best = max(
        grid.results,
        key=lambda r: (r.accuracy, -r.parameter_count, -r.topology.hidden_layers),
    )
    assert chosen == best.topology


def test_grid_csv_shape():
    grid = DseGrid()
    grid.results = [_result(1, 4, 0.9), _result(2, 8, 0.95, mcc=None)]
    lines = grid_to_csv(grid).strip().splitlines()
    assert lines[0].startswith("hidden_layers,neurons_per_layer")
    assert len(lines) == 3
    assert "undefined" in lines[2]
