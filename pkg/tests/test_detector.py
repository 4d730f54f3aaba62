from __future__ import annotations

import math

import numpy as np
import pytest

from spectral_sentinel.detector import (
    DetectionConfig,
    LESSeries,
    WindowSpec,
    calibrated_threshold,
    detect,
    detect_changepoints,
    les_series,
    les_series_to_csv_text,
    load_les_csv,
    null_scores,
    null_threshold,
    parse_ids,
    reference_score,
    sliding_windows,
    window_count,
    zero_sequence_indicator,
    zscore_null,
)
from spectral_sentinel.errors import (
    ArityError,
    ConfigurationError,
    NumericError,
    ParseError,
    WindowSizeError,
    ZeroVarianceError,
)
from spectral_sentinel import detector
from spectral_sentinel.rmt import (
    SpectralNull,
    covariance,
    eigenvalues_sym,
    gen_test_matrix,
    kurtosis_excess,
    les,
    les_mean,
    les_variance,
    standardize_rows,
)
from spectral_sentinel.series import Channel, TimeSeries
from spectral_sentinel.testfunctions import TestFunction

SQUARE = TestFunction.power(2)


def noise_series(channels=3, n=1000, seed=0, rate=100.0):
    data = gen_test_matrix(channels, n, seed=seed)
    return TimeSeries(0.0, rate, tuple(Channel(i + 1, f"c{i + 1}") for i in range(channels)), data)


# ---------------------------------------------------------------- windows


def test_window_counts():
    assert window_count(18000, WindowSpec(2000, 100)) == 161
    assert window_count(18000, WindowSpec(2000, 2000)) == 9
    with pytest.raises(WindowSizeError):
        window_count(1000, WindowSpec(2000, 100))


def test_window_spec_validation():
    with pytest.raises(ConfigurationError):
        WindowSpec(1)
    with pytest.raises(ConfigurationError):
        WindowSpec(10, 0)
    with pytest.raises(ConfigurationError):
        WindowSpec(10).check_channels(11)


def test_windows_are_views_in_order():
    data = np.arange(20.0).reshape(2, 10)
    wins = sliding_windows(data, WindowSpec(4, 3))
    assert len(wins) == 3
    assert np.array_equal(wins[1], data[:, 3:7])
    assert np.shares_memory(wins[0], data)


# ---------------------------------------------------------------- LES series


def test_les_series_times_and_metadata():
    s = noise_series(n=1000)
    out = les_series(s, WindowSpec(200, 100), SQUARE)
    assert len(out) == 9
    assert out.times[0] == pytest.approx(1.99)
    assert out.c == pytest.approx(3 / 200)
    assert out.phi == "lambda^2"


def test_constant_plus_tiny_noise_gives_flat_statistic():
    rng = np.random.default_rng(1)
    data = np.array([[1.0], [2.0], [3.0]]) + 1e-9 * rng.standard_normal((3, 3000))
    s = TimeSeries(0.0, 100.0, tuple(Channel(i + 1, f"c{i + 1}") for i in range(3)), data)
    for phi in (TestFunction.identity(), SQUARE, TestFunction.power(3)):
        vals = les_series(s, WindowSpec(500, 100), phi, standardize=False).values
        assert np.ptp(vals) / np.mean(vals) < 1e-3


def test_subset_changes_ratio_and_values():
    s = noise_series(channels=42, n=4000, seed=2)
    full = les_series(s, WindowSpec(2000, 500), SQUARE)
    part = les_series(s, WindowSpec(2000, 500), SQUARE, subset=parse_ids("1-24"))
    assert part.c == pytest.approx(24 / 2000)
    assert full.c == pytest.approx(42 / 2000)
    assert not np.allclose(full.values, part.values)


def test_threaded_matches_serial():
    s = noise_series(channels=5, n=3000, seed=3)
    a = les_series(s, WindowSpec(300, 50), SQUARE)
    b = les_series(s, WindowSpec(300, 50), SQUARE, workers=4)
    assert np.array_equal(a.values, b.values)


@pytest.mark.parametrize("standardize", [True, False])
def test_batched_windows_match_per_window_computation(standardize, monkeypatch):
    s = noise_series(channels=6, n=2500, seed=11)
    spec = WindowSpec(400, 150)
    monkeypatch.setattr(detector, "_BATCH_BUDGET", 6 * 400 * 3)  # three windows per batch
    out = les_series(s, spec, SQUARE, standardize=standardize)
    for k, w in enumerate(sliding_windows(s, spec)):
        x = standardize_rows(w) if standardize else w
        assert out.values[k] == pytest.approx(les(eigenvalues_sym(covariance(x)), SQUARE), rel=1e-12)
        assert out.kappa4[k] == pytest.approx(kurtosis_excess(x), rel=1e-9, abs=1e-12)


def test_constant_channel_reports_window():
    s = noise_series(n=600)
    data = s.data.copy()
    data[1, 200:] = 5.0
    with pytest.raises(ZeroVarianceError) as info:
        les_series(s.with_data(data), WindowSpec(200, 100), SQUARE)
    assert info.value.channel == 2 and info.value.window == 2


def test_empty_subset():
    with pytest.raises(ConfigurationError):
        les_series(noise_series(), WindowSpec(100, 10), SQUARE, subset=[])


# ---------------------------------------------------------------- scoring


def test_zscore_trivial():
    n, c = 50, 0.25
    mean = les_mean(SQUARE, n, c)
    sd = math.sqrt(les_variance(SQUARE, SpectralNull(c)))
    assert zscore_null(mean, SQUARE, n, c) == pytest.approx(0.0, abs=1e-12)
    assert zscore_null(mean + 2 * sd, SQUARE, n, c) == pytest.approx(2.0)


def test_zscore_constant_function_has_no_spread():
    with pytest.raises(NumericError):
        zscore_null(10.0, TestFunction.power(0), 10, 0.5)


def test_zscore_monte_carlo(square_tau_samples):
    n, c = 100, 0.25
    corrected = np.array([zscore_null(t, SQUARE, n, c, real_bias=True) for t in square_tau_samples[:1000]])
    assert abs(corrected.mean()) < 0.1
    assert corrected.var() == pytest.approx(1.0, abs=0.15)
    # without the real-entry correction the centre is off by (1/c)/sigma
    raw = np.array([zscore_null(t, SQUARE, n, c) for t in square_tau_samples[:1000]])
    shift = (1 / c) / math.sqrt(les_variance(SQUARE, SpectralNull(c)))
    assert raw.mean() - corrected.mean() == pytest.approx(shift, rel=1e-9)


def test_null_scores_use_per_window_kurtosis():
    s = TimeSeries(0.0, 1.0, tuple(Channel(i + 1, "r") for i in range(20)), gen_test_matrix(20, 4000, "rademacher", 4))
    out = les_series(s, WindowSpec(400, 400), SQUARE, standardize=False)
    z_fitted = null_scores(out, SQUARE, real_bias=True)
    z_gauss = null_scores(out, SQUARE, kappa4=0.0, real_bias=True)
    # Rademacher entries have a much tighter spread than the Gaussian null predicts
    assert np.std(z_fitted) > 2 * np.std(z_gauss)


def test_reference_score_trivial():
    ref = np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0])
    mu, sd = ref.mean(), ref.std()
    values = np.concatenate([ref, [mu + 3 * sd, mu]])
    scores = reference_score(values, (0, 8))
    assert scores[8] == pytest.approx(3.0)
    assert scores[9] == pytest.approx(0.0)
    assert reference_score(np.concatenate([ref, [mu - 3 * sd]]), (0, 8), signed=True)[8] == pytest.approx(-3.0)


def test_reference_score_errors():
    with pytest.raises(NumericError):
        reference_score(np.ones(20), (0, 10))
    with pytest.raises(ConfigurationError):
        reference_score(np.arange(20.0), (0, 5))
    with pytest.raises(ConfigurationError):
        reference_score(np.arange(20.0), (10, 30))


def test_detect_changepoints_basic():
    cfg = DetectionConfig(threshold=3.0, min_gap=10)
    assert detect_changepoints(np.zeros(50), cfg) == []
    s = np.zeros(50)
    s[20:25] = 4.0
    events = detect_changepoints(s, cfg)
    assert [e.window for e in events] == [20]
    s[27] = 5.0  # re-crossing inside min_gap is suppressed
    assert [e.window for e in detect_changepoints(s, cfg)] == [20]
    s[40] = 5.0
    assert [e.window for e in detect_changepoints(s, cfg)] == [20, 40]


def test_detection_config_validation():
    with pytest.raises(ConfigurationError):
        DetectionConfig(method="cusum")
    with pytest.raises(ConfigurationError):
        DetectionConfig(threshold=0.0)
    with pytest.raises(ConfigurationError):
        DetectionConfig(reference=(5, 5))


def _les(values, step=1.0):
    v = np.asarray(values, dtype=float)
    return LESSeries(np.arange(v.size) * step, v, "lambda^2", (1, 2, 3), 3, 100, 10)


def test_detect_reanchors_after_each_event():
    rng = np.random.default_rng(0)
    level = np.concatenate([np.zeros(60), np.full(60, 10.0), np.full(80, 20.0)])
    values = level + rng.standard_normal(level.size)
    cfg = DetectionConfig(threshold=4.0, reference=(0, 30), min_gap=10)
    result = detect(_les(values), cfg)
    assert [e.window for e in result.events] == [60, 120]
    assert result.references == [(0, 30), (70, 100), (130, 160)]
    fixed = detect(_les(values), DetectionConfig(threshold=4.0, reference=(0, 30), min_gap=10, reanchor=False))
    assert [e.window for e in fixed.events] == [60]


def test_detect_null_method_on_quiet_noise():
    s = noise_series(channels=20, n=40_000, seed=8)
    out = les_series(s, WindowSpec(400, 400), SQUARE, standardize=False)
    result = detect(out, DetectionConfig(method="null-zscore", threshold=4.0, kappa4=0.0, real_bias=True), SQUARE)
    assert result.events == []


def test_lorenz_scores_rise_after_each_change_point(lorenz_report):
    les_s, result = lorenz_report.data["les"], lorenz_report.data["result"]
    assert len(les_s) == 161
    first = reference_score(les_s, (0, 30))
    assert first[41:81].max() > 3  # after 60 s
    assert result.scores[111:].max() > 3  # after 120 s against the re-anchored reference


# ---------------------------------------------------------------- zero sequence


def three_phase(amplitudes=(1.0, 1.0, 1.0), shifts=(0.0, -2 * np.pi / 3, 2 * np.pi / 3), cycles=10, per_cycle=64):
    t = np.arange(cycles * per_cycle) / per_cycle
    data = np.array([a * np.sin(2 * np.pi * t + p) for a, p in zip(amplitudes, shifts)])
    return TimeSeries(0.0, float(per_cycle), tuple(Channel(i + 1, ph) for i, ph in enumerate("ABC")), data)


def test_zero_sequence_balanced_and_common_mode():
    assert np.all(zero_sequence_indicator(three_phase(), 64) < 1e-10)
    common = zero_sequence_indicator(three_phase(shifts=(0.0, 0.0, 0.0)), 64)
    assert np.allclose(common, 1 / math.sqrt(2))


def test_zero_sequence_arity_and_cycle():
    s = three_phase()
    with pytest.raises(ArityError):
        zero_sequence_indicator(s.select([1, 2]), 64)
    with pytest.raises(WindowSizeError):
        zero_sequence_indicator(s.select([1, 2, 3]).with_data(s.data[:, :10]), 64)


def test_calibrated_threshold():
    assert calibrated_threshold([1.0, 1.0, 1.0, 1.0]) == 1.0
    assert calibrated_threshold([0.0, 2.0], n_sigma=2) == pytest.approx(3.0)


def test_null_threshold():
    assert null_threshold(np.arange(1.0, 101.0), 0.01) == pytest.approx(99.01)
    assert null_threshold(np.arange(1.0, 21.0), 0.1) == pytest.approx(18.1)
    with pytest.raises(ConfigurationError):
        null_threshold(np.arange(50.0), 0.01)  # fewer records than 1/alpha
    with pytest.raises(ConfigurationError):
        null_threshold(np.arange(50.0), 0.0)
    with pytest.raises(NumericError):
        null_threshold(np.array([1.0, math.nan] * 60), 0.01)


def test_fault_case_sensitive_feeders(fault_report):
    case = fault_report.data["case"]
    assert case.series.n_channels == 42
    assert case.series.n_samples == 20 * 64
    assert len(case.entities) == 7
    assert len({e.id for e in case.entities}) == 7
    assert all(r > 5 for r in fault_report.data["ratios"].values())


# ---------------------------------------------------------------- serialization


def test_les_csv_round_trip(tmp_path):
    out = les_series(noise_series(channels=4, n=2000), WindowSpec(400, 200), SQUARE)
    scores = null_scores(out, SQUARE)
    path = tmp_path / "les.csv"
    path.write_text(les_series_to_csv_text(out, scores))
    back = load_les_csv(path)
    assert back.channels == out.channels and back.window == 400 and back.stride == 200
    assert np.array_equal(back.values, out.values)
    assert np.allclose(back.times, out.times)
    assert "# c=0.01\n" in path.read_text()


def test_les_csv_missing_column(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("# window=10\nwindow_end_s,score\n1.0,2.0\n")
    with pytest.raises(ParseError):
        load_les_csv(path)


def test_parse_ids():
    assert parse_ids("1-3,7") == [1, 2, 3, 7]
    with pytest.raises(ConfigurationError):
        parse_ids("5-2")
    with pytest.raises(ConfigurationError):
        parse_ids("")
