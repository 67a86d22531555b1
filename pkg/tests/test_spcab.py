import numpy as np
import pytest

from htscope.errors import ConfigError, DomainError
from htscope.isa import generate_workload
from htscope.soc_power import (
    PipelineStage,
    StageSpec,
    default_stage_profile,
    load_default_power_model,
    simulate_trace,
)
from htscope.spcab import (
    AdcSpec,
    FeatureStream,
    acquire,
    collector_width,
    default_adc,
    features_from_bytes,
    features_from_csv,
    features_to_bytes,
    features_to_csv,
    mirrored_widths,
    scale_factors,
    size_stage,
    sizing_report,
)


def _trace(cycles=700, seed=0, noise=0.005):
    model = load_default_power_model()
    wl = generate_workload("div", cycles, seed)
    return simulate_trace(wl, model, cycles, seed=seed, noise_sigma=noise)


# --- mirror sizing -------------------------------------------------------


def test_scale_factor_examples():
    np.testing.assert_allclose(scale_factors([2e-6, 4e-6, 8e-6]), [0.25, 0.5, 1.0])
    np.testing.assert_allclose(scale_factors([5e-6]), [1.0])


def test_scale_factor_oracle():
    rng = np.random.default_rng(0)
    currents = rng.uniform(1e-7, 1e-3, size=100)
    got = scale_factors(currents)
    expected = np.array([c / currents.max() for c in currents])
    np.testing.assert_allclose(got, expected, rtol=1e-12)
    assert got.max() == 1.0
    assert np.all(got > 0)


def test_scale_factor_rejects_bad_input():
    with pytest.raises(DomainError):
        scale_factors([])
    with pytest.raises(DomainError):
        scale_factors([1e-6, -1e-6])


def test_mirrored_width_examples():
    np.testing.assert_allclose(mirrored_widths(10.0, [1.0]), [10.0])
    np.testing.assert_allclose(mirrored_widths(10.0, [0.25, 0.5, 1.0]), [2.5, 5.0, 10.0])


def test_mirrored_width_ratio_oracle():
    rng = np.random.default_rng(1)
    for _ in range(20):
        w = rng.uniform(0.5, 50)
        sf = rng.uniform(0.01, 1.0, size=8)
        out = mirrored_widths(w, sf)
        np.testing.assert_allclose(out / w, sf, rtol=1e-12)
        assert np.all(out <= w + 1e-15)


def test_mirrored_width_rejects_bad_input():
    with pytest.raises(DomainError):
        mirrored_widths(0.0, [0.5])
    with pytest.raises(DomainError):
        mirrored_widths(10.0, [1.5])


def test_collector_width_examples():
    assert collector_width(1.0, 2.0, 1) == pytest.approx(2.0)
    assert collector_width(1.0, 2.0, 4) == pytest.approx(0.5)


def test_collector_width_monotone_in_component_count():
    widths = [collector_width(1.0, 2.0, c) for c in range(1, 11)]
    assert all(a > b for a, b in zip(widths, widths[1:]))
    with pytest.raises(DomainError):
        collector_width(1.0, 2.0, 0)


def test_sizing_round_trip_preserves_current_ratios():
    rng = np.random.default_rng(2)
    currents = rng.uniform(1e-6, 1e-4, size=6)
    widths = mirrored_widths(12.0, scale_factors(currents))
    for i in range(6):
        for j in range(6):
            assert widths[i] / widths[j] == pytest.approx(currents[i] / currents[j])


def test_size_stage_checks_branch_count():
    spec = StageSpec(PipelineStage.DECODE, 2)
    with pytest.raises(ConfigError):
        size_stage(spec, [1e-6], 10.0, 2.0, 0.5)
    sizing = size_stage(spec, [1e-6, 2e-6], 10.0, 2.0, 0.5)
    assert sizing.scale_factors.max() == 1.0
    assert sizing.collector_width == pytest.approx(0.5)


# --- ADC -----------------------------------------------------------------


def test_adc_step():
    adc = AdcSpec(bits=10, full_scale=0.2)
    assert adc.step == pytest.approx(0.2 / 1024)


def test_quantize_is_multiple_of_step_and_clamped():
    adc = AdcSpec(bits=8, full_scale=0.1)
    vals = np.array([0.0, 0.013, 0.0999, 0.1, 0.5])
    q = adc.quantize(vals)
    np.testing.assert_allclose(np.round(q / adc.step), q / adc.step, atol=1e-9)
    assert q[-1] == adc.full_scale
    assert q[-2] == adc.full_scale


def test_quantization_error_within_half_step():
    adc = AdcSpec(bits=10, full_scale=0.2)
    rng = np.random.default_rng(3)
    vals = rng.uniform(0.0, 0.2, size=10_000)
    q = adc.quantize(vals)
    assert np.max(np.abs(q - vals)) <= adc.step / 2 + 1e-12


def test_ld_fetch_value_quantized_within_one_step():
    adc = AdcSpec(bits=10, full_scale=0.2)
    q = float(adc.quantize(np.array([0.086649]))[0])
    assert abs(q - 0.086649) <= adc.step


def test_default_adc_scale_and_detectability_floor():
    model = load_default_power_model()
    adc = default_adc(model)
    assert adc.full_scale == pytest.approx(2 * model.power.max())
    # A 5% change on any nominal table power must move the output >= 1 step.
    for p in model.power.ravel():
        assert abs(adc.quantize(p * 1.05) - adc.quantize(p)) >= adc.step - 1e-12


def test_adc_validation():
    with pytest.raises(ConfigError):
        AdcSpec(bits=0)
    with pytest.raises(ConfigError):
        AdcSpec(full_scale=0.0)
    with pytest.raises(ConfigError):
        AdcSpec(sample_period_cycles=0)


# --- acquisition ---------------------------------------------------------


def test_acquire_one_sample_per_cycle():
    trace = _trace(1000)
    stream = acquire(trace, default_adc(load_default_power_model()))
    assert len(stream) == len(trace)


def test_acquire_round_robin_order():
    trace = _trace(14)
    stream = acquire(trace, default_adc(load_default_power_model()))
    expected = [(int(PipelineStage.FETCH) + t) % 7 for t in range(14)]
    assert list(stream.stage) == expected


def test_acquire_start_stage_phase():
    trace = _trace(7)
    stream = acquire(
        trace, default_adc(load_default_power_model()), start_stage=PipelineStage.MEMORY
    )
    assert list(stream.stage[:3]) == [4, 5, 6]


def test_acquire_stage_coverage_every_seven_cycles():
    trace = _trace(7 * 40)
    stream = acquire(trace, default_adc(load_default_power_model()))
    stages = stream.stage.reshape(-1, 7)
    assert np.all(np.sort(stages, axis=1) == np.arange(7))


def test_acquire_samples_match_trace():
    trace = _trace(210)
    adc = default_adc(load_default_power_model())
    stream = acquire(trace, adc)
    t = np.arange(210)
    np.testing.assert_allclose(
        stream.power, adc.quantize(trace.stage_power[t, stream.stage])
    )
    assert np.array_equal(stream.opcode, trace.opcode[t, stream.stage])
    assert np.array_equal(stream.ground_truth, trace.ht_active)


def test_acquire_rejects_empty_trace():
    from htscope.soc_power import PowerTrace

    empty = PowerTrace(
        stage_power=np.zeros((0, 7)),
        opcode=np.zeros((0, 7), dtype=np.int64),
        ht_active=np.zeros(0, dtype=bool),
    )
    with pytest.raises(ConfigError):
        acquire(empty, AdcSpec())


# --- stream serialization ------------------------------------------------


def _stream():
    trace = _trace(100)
    trace.ht_active[10:20] = True
    return acquire(trace, default_adc(load_default_power_model()))


def test_feature_csv_round_trip():
    stream = _stream()
    back = features_from_csv(features_to_csv(stream))
    np.testing.assert_array_equal(back.power, stream.power)
    assert np.array_equal(back.stage, stream.stage)
    assert np.array_equal(back.ground_truth, stream.ground_truth)


def test_feature_binary_round_trip():
    stream = _stream()
    back = features_from_bytes(features_to_bytes(stream))
    for name in ("cycle", "stage", "power", "opcode", "category", "ground_truth"):
        np.testing.assert_array_equal(getattr(back, name), getattr(stream, name))


def test_feature_concat_subset():
    stream = _stream()
    double = FeatureStream.concatenate([stream, stream])
    assert len(double) == 2 * len(stream)
    sub = double.subset(np.arange(len(stream)))
    np.testing.assert_array_equal(sub.power, stream.power)


# --- sizing report -------------------------------------------------------


def test_sizing_report_port_counts():
    from htscope.cli import default_branch_currents

    report = sizing_report(default_stage_profile(), default_branch_currents())
    assert report["naive_power_ports"] == 14
    assert report["single_port_design_ports"] == 1
    assert report["port_reduction_ratio"] == pytest.approx(14.0)
    assert report["estimated_sensor_area_um2"] > 0
    assert len(report["stages"]) == 7
