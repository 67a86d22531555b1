import numpy as np
import pytest

from htscope import detector
from htscope.detector import (
    FeatureNorm,
    Hyper,
    MlpTopology,
    TrainingSet,
    encode,
    encode_stream,
    fit_norm,
    fold_indices,
    forward,
    init_params,
    k_fold_validate,
    loss_and_grads,
    model_from_json,
    model_to_json,
    train,
)
from htscope.errors import ConfigError, TrainingError
from htscope.isa import InstructionCategory
from htscope.seeding import rng_for
from htscope.spcab import FeatureStream, SampledFeature
from htscope.soc_power import PipelineStage


def _stream(power, labels, opcode=None, category=None):
    n = len(power)
    return FeatureStream(
        cycle=np.arange(n),
        stage=np.arange(n) % 7,
        power=np.asarray(power, dtype=float),
        opcode=np.asarray(opcode if opcode is not None else np.ones(n), dtype=np.int64),
        category=np.asarray(
            category if category is not None else np.full(n, 2), dtype=np.int64
        ),
        ground_truth=np.asarray(labels, dtype=bool),
    )


def _toy_set(n=400, seed=0):
    """Two clusters separable on the power axis alone."""
    rng = np.random.default_rng(seed)
    lo = rng.normal(0.1, 0.01, n // 2)
    hi = rng.normal(0.9, 0.01, n // 2)
    labels = np.concatenate([np.zeros(n // 2, bool), np.ones(n // 2, bool)])
    stream = _stream(np.concatenate([lo, hi]), labels)
    return TrainingSet.from_stream(stream)


# --- encoding ------------------------------------------------------------


def test_encode_vector_layout():
    norm = FeatureNorm(power_mean=0.5, power_scale=0.1, opcode_scale=30)
    f = SampledFeature(
        cycle=0,
        stage=PipelineStage.FETCH,
        quantized_power=0.5,
        opcode_id=15,
        category=InstructionCategory.CAT1,
        ground_truth=False,
    )
    x = encode(f, norm)
    assert x.shape == (7,)
    assert x[0] == 0.0  # power at the training mean
    assert x[1] == pytest.approx(0.5)
    np.testing.assert_array_equal(x[2:], [1, 0, 0, 0, 0])


def test_encode_stream_matches_single_encode():
    stream = _stream([0.3, 0.7], [False, True], opcode=[2, 9], category=[1, 5])
    norm = fit_norm(stream)
    xs = encode_stream(stream, norm)
    for i in range(2):
        np.testing.assert_allclose(xs[i], encode(stream.record(i), norm))


def test_ground_truth_never_reaches_encoding():
    stream = _stream([0.3, 0.7], [False, True])
    norm = fit_norm(stream)
    a = encode_stream(stream, norm).copy()
    stream.ground_truth[:] = ~stream.ground_truth
    b = encode_stream(stream, norm)
    np.testing.assert_array_equal(a, b)


def test_norm_requires_positive_scales():
    with pytest.raises(ConfigError):
        FeatureNorm(power_mean=0.0, power_scale=0.0, opcode_scale=1.0)


# --- topology ------------------------------------------------------------


def test_parameter_count_2x8():
    assert MlpTopology(2, 8).parameter_count() == 154


def test_parameter_count_matches_serialized_model():
    data = _toy_set()
    for topo in (MlpTopology(1, 4), MlpTopology(2, 8)):
        model = train(data, topo, Hyper(epochs=10))
        actual = sum(w.size for w in model.weights) + sum(b.size for b in model.biases)
        assert actual == topo.parameter_count()


def test_cost_strictly_increasing_in_neurons():
    for layers in (1, 2):
        costs = [MlpTopology(layers, n).mac_count() for n in (4, 8, 16, 32, 64, 100)]
        assert all(a < b for a, b in zip(costs, costs[1:]))


def test_topology_validation():
    with pytest.raises(ConfigError):
        MlpTopology(3, 8)
    with pytest.raises(ConfigError):
        MlpTopology(1, 0)


# --- gradients and forward pass ------------------------------------------


def test_forward_rows_are_probabilities():
    rng = rng_for(0, "t")
    w, b = init_params(MlpTopology(2, 3), rng)
    x = rng.normal(size=(20, 7))
    probs = forward(w, b, x)
    np.testing.assert_allclose(probs.sum(axis=1), 1.0, rtol=1e-12)
    assert np.all(probs >= 0)


def test_output_scaling_preserves_argmax():
    rng = rng_for(1, "t")
    w, b = init_params(MlpTopology(1, 3), rng)
    x = rng.normal(size=(50, 7))
    base = forward(w, b, x).argmax(axis=1)
    w2 = [m.copy() for m in w]
    b2 = [v.copy() for v in b]
    w2[-1] *= 7.5
    b2[-1] *= 7.5
    scaled = forward(w2, b2, x).argmax(axis=1)
    assert np.array_equal(base, scaled)


def test_gradient_check_against_finite_differences():
    rng = np.random.default_rng(42)
    eps = 1e-5
    for trial in range(50):
        topo = MlpTopology(int(rng.integers(1, 3)), int(rng.integers(2, 4)))
        w, b = init_params(topo, rng_for(trial, "gc"))
        n = 12
        x = rng.normal(size=(n, 7))
        y = rng.integers(0, 2, size=n)
        sw = rng.uniform(0.5, 2.0, size=n)
        _, gw, gb = loss_and_grads(w, b, x, y, sw)
        for params, grads in ((w, gw), (b, gb)):
            for p, g in zip(params, grads):
                flat = p.ravel()
                for k in rng.choice(flat.size, size=min(4, flat.size), replace=False):
                    orig = flat[k]
                    flat[k] = orig + eps
                    lo_hi = loss_and_grads(w, b, x, y, sw)[0]
                    flat[k] = orig - eps
                    lo_lo = loss_and_grads(w, b, x, y, sw)[0]
                    flat[k] = orig
                    fd = (lo_hi - lo_lo) / (2 * eps)
                    gk = g.ravel()[k]
                    denom = max(abs(fd), abs(gk), 1e-8)
                    assert abs(fd - gk) / denom < 1e-4


# --- training ------------------------------------------------------------


def test_toy_set_trains_to_99_percent():
    data = _toy_set()
    model = train(data, MlpTopology(1, 4), Hyper(epochs=200))
    pred, _ = detector.classify_stream(model, data.features)
    assert (pred == data.labels).mean() >= 0.99


def test_zero_epochs_returns_initialization():
    data = _toy_set()
    topo = MlpTopology(1, 4)
    hyper = Hyper(seed=3, epochs=0)
    model = train(data, topo, hyper)
    rng = rng_for(3, "mlp-init", 1, 4)
    w0, b0 = init_params(topo, rng)
    for a, b in zip(model.weights, w0):
        np.testing.assert_array_equal(a, b)
    for a, b in zip(model.biases, b0):
        np.testing.assert_array_equal(a, b)
    assert model.train_meta["loss_trace"] == []


def test_training_deterministic():
    a = train(_toy_set(), MlpTopology(2, 4), Hyper(seed=5, epochs=50))
    b = train(_toy_set(), MlpTopology(2, 4), Hyper(seed=5, epochs=50))
    for wa, wb in zip(a.weights, b.weights):
        np.testing.assert_array_equal(wa, wb)
    assert a.train_meta["loss_trace"] == b.train_meta["loss_trace"]


def test_single_class_data_rejected():
    stream = _stream([0.1, 0.2, 0.3], [False, False, False])
    with pytest.raises(TrainingError):
        train(TrainingSet.from_stream(stream), MlpTopology(1, 4), Hyper())


def test_loss_trace_window_means_non_increasing():
    data = _toy_set(seed=7)
    model = train(data, MlpTopology(2, 8), Hyper(seed=1, epochs=150, learning_rate=0.1))
    trace = np.array(model.train_meta["loss_trace"])
    assert trace.size > 0 and trace.size % 10 == 0
    means = trace.reshape(-1, 10).mean(axis=1)
    assert np.all(np.diff(means) <= 1e-12)


def test_class_weight_default_is_imbalance_ratio():
    labels = np.zeros(100, bool)
    labels[:4] = True
    w = detector._sample_weights(labels, None)
    assert w[labels].sum() == pytest.approx(4 * 24.0)
    assert np.all(w[~labels] == 1.0)


def test_threshold_zero_flags_everything():
    data = _toy_set()
    model = train(data, MlpTopology(1, 4), Hyper(epochs=20))
    pred, scores = detector.classify_stream(model, data.features, threshold=0.0)
    assert pred.all()
    assert np.all((scores >= 0) & (scores <= 1))


def test_classify_single_feature_agrees_with_stream():
    data = _toy_set()
    model = train(data, MlpTopology(1, 4), Hyper(epochs=60))
    _, scores = detector.classify_stream(model, data.features)
    label, score = detector.classify(model, data.features.record(0))
    assert score == pytest.approx(scores[0])
    assert label in ("intruded", "un_intruded")


# --- k-fold --------------------------------------------------------------


def test_fold_sizes_even_and_uneven():
    assert [len(f) for f in fold_indices(100, 5)] == [20] * 5
    assert [len(f) for f in fold_indices(101, 5)] == [21, 20, 20, 20, 20]


def test_folds_partition_index_set():
    folds = fold_indices(103, 4)
    joined = np.concatenate(folds)
    assert len(joined) == 103
    assert len(np.unique(joined)) == 103


def test_k_fold_validate_returns_k_reports():
    data = _toy_set(n=120)
    reports = k_fold_validate(data, MlpTopology(1, 4), 3, Hyper(epochs=30))
    assert len(reports) == 3
    assert sum(r.counts.total for r in reports) == 120


def test_k_fold_validation_bounds():
    data = _toy_set(n=10)
    with pytest.raises(ConfigError):
        k_fold_validate(data, MlpTopology(1, 4), 1, Hyper())
    with pytest.raises(ConfigError):
        k_fold_validate(data, MlpTopology(1, 4), 11, Hyper())


# --- serialization -------------------------------------------------------


def test_model_json_round_trip():
    data = _toy_set()
    model = train(data, MlpTopology(2, 4), Hyper(epochs=40, threshold=0.7))
    back = model_from_json(model_to_json(model))
    assert back.topology == model.topology
    for a, b in zip(back.weights, model.weights):
        np.testing.assert_array_equal(a, b)
    _, s1 = detector.classify_stream(model, data.features)
    _, s2 = detector.classify_stream(back, data.features)
    np.testing.assert_array_equal(s1, s2)
    assert back.train_meta["threshold"] == 0.7


def test_model_json_version_check():
    data = _toy_set()
    model = train(data, MlpTopology(1, 4), Hyper(epochs=5))
    import json

    payload = json.loads(model_to_json(model))
    payload["format_version"] = 99
    from htscope.errors import DataError

    with pytest.raises(DataError):
        model_from_json(json.dumps(payload))
