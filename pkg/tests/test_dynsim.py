from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import optimize

from spectral_sentinel.detector import zero_sequence_indicator
from spectral_sentinel.dynsim import (
    FaultSpec,
    LorenzParams,
    ParameterSchedule,
    Power3BusParams,
    SimConfig,
    ThreeBusNetwork,
    add_noise,
    default_power3bus,
    inject_fault,
    lorenz_rhs,
    power3bus_rhs,
    rk4_step,
    simulate_lorenz,
    simulate_lorenz_ensemble,
    simulate_power3bus,
)
from spectral_sentinel.errors import ConfigurationError, IntegrationError, SimulationDiverged
from spectral_sentinel.series import Channel, TimeSeries

PAPER_LORENZ = LorenzParams(10.0, 28.0, 8.0 / 3.0)


def integrate(x0, dt, steps, f):
    x = np.asarray(x0, dtype=float)
    for i in range(steps):
        x = rk4_step(x, i * dt, dt, f)
    return x


# ---------------------------------------------------------------- rk4


def test_rk4_zero_field():
    x = np.array([1.5, -2.0, 3.0])
    assert np.array_equal(rk4_step(x, 0.0, 0.1, lambda t, s: np.zeros_like(s)), x)


def test_rk4_exponential():
    y = rk4_step(np.array([1.0]), 0.0, 0.1, lambda t, s: s)[0]
    assert y == pytest.approx(1.10517083, abs=1e-8)
    assert abs(y - math.exp(0.1)) < 1e-7


def test_rk4_non_finite_names_component():
    with pytest.raises(IntegrationError) as info:
        rk4_step(np.array([1.0, 1.0]), 0.0, 0.1, lambda t, s: np.array([0.0, np.inf]))
    assert info.value.component == 1


def test_rk4_rejects_bad_dt():
    with pytest.raises(ConfigurationError):
        rk4_step(np.array([1.0]), 0.0, 0.0, lambda t, s: s)


def trajectory(x0, dt, steps, every, f):
    x = np.asarray(x0, dtype=float)
    out = [x]
    for i in range(steps):
        x = rk4_step(x, i * dt, dt, f)
        if (i + 1) % every == 0:
            out.append(x)
    return np.array(out)


def global_error_ratio(x0, dt, f):
    """Max error over [0, 1] s at step dt divided by that at dt/2, against a dt/100 run."""
    n = round(1 / dt)
    ref = trajectory(x0, dt / 100, 100 * n, 100, f)
    e1 = np.abs(trajectory(x0, dt, n, 1, f) - ref).max()
    e2 = np.abs(trajectory(x0, dt / 2, 2 * n, 2, f) - ref).max()
    return e1 / e2


@pytest.mark.parametrize("x0", [(1.0, 1.0, 1.0), (-4.9, -3.7, 24.7)])
def test_rk4_fourth_order_on_lorenz(x0):
    assert global_error_ratio(x0, 0.01, lorenz_rhs(PAPER_LORENZ)) == pytest.approx(16.0, rel=0.2)


def test_rk4_fourth_order_on_exponential():
    assert global_error_ratio((1.0,), 0.1, lambda t, s: s) == pytest.approx(16.0, rel=0.05)


# ---------------------------------------------------------------- configuration types


def test_lorenz_params_validation():
    with pytest.raises(ConfigurationError):
        LorenzParams(sigma=0.0)
    with pytest.raises(ConfigurationError):
        LorenzParams(rho=-1.0)


def test_sim_config_validation():
    with pytest.raises(ConfigurationError):
        SimConfig(100.0, 0.0, (1, 1, 1))
    with pytest.raises(ConfigurationError):
        SimConfig(100.0, 1.0, (1, 1, 1), dt=0.003)
    assert SimConfig(100.0, 1.0, (1, 1, 1)).dt == pytest.approx(0.001)


def test_schedule_validation():
    with pytest.raises(ConfigurationError):
        ParameterSchedule(((2.0, "rho", 1.0), (1.0, "rho", 2.0)))
    cfg = SimConfig(100.0, 10.0, (1, 1, 1))
    with pytest.raises(ConfigurationError):
        simulate_lorenz(PAPER_LORENZ, ParameterSchedule(((11.0, "rho", 30.0),)), cfg)
    with pytest.raises(ConfigurationError):
        simulate_lorenz(PAPER_LORENZ, ParameterSchedule(((1.0, "gamma", 30.0),)), cfg)


# ---------------------------------------------------------------- Lorenz


def test_lorenz_shape_of_change_point_protocol(lorenz_report):
    series = lorenz_report.data["series"]
    assert series.data.shape == (3, 18000)
    assert [c.name for c in series.channels] == ["x1", "x2", "x3"]


def test_lorenz_origin_is_fixed():
    series = simulate_lorenz(PAPER_LORENZ, None, SimConfig(100.0, 5.0, (0.0, 0.0, 0.0)))
    assert not series.data.any()


def test_lorenz_subcritical_decay():
    series = simulate_lorenz(LorenzParams(rho=0.5), None, SimConfig(100.0, 50.0, (0.5, -0.3, 0.2)))
    assert np.linalg.norm(series.data[:, -1]) < 1e-6
    # the sampled trajectory agrees with a step-size-halved reference
    fine = simulate_lorenz(LorenzParams(rho=0.5), None, SimConfig(100.0, 50.0, (0.5, -0.3, 0.2), dt=0.0005))
    assert np.max(np.abs(series.data - fine.data)) < 1e-9


def test_lorenz_schedule_takes_effect_only_after_change():
    cfg = SimConfig(100.0, 20.0, (1.0, 1.0, 1.0))
    plain = simulate_lorenz(PAPER_LORENZ, None, cfg)
    changed = simulate_lorenz(PAPER_LORENZ, ParameterSchedule(((10.0, "rho", 35.0),)), cfg)
    assert np.array_equal(plain.data[:, :1001], changed.data[:, :1001])
    assert not np.array_equal(plain.data[:, 1002:], changed.data[:, 1002:])


def test_lorenz_deterministic():
    cfg = SimConfig(100.0, 5.0, (1.0, 2.0, 3.0), burn_in=1.0)
    assert simulate_lorenz(PAPER_LORENZ, None, cfg).equals(simulate_lorenz(PAPER_LORENZ, None, cfg))


def test_ensemble_members_match_single_runs():
    cfg = SimConfig(100.0, 3.0, (0.0, 0.0, 0.0), burn_in=1.0)
    starts = [(1.0, 1.0, 1.0), (-3.0, 2.0, 20.0), (0.5, -0.5, 5.0)]
    members = simulate_lorenz_ensemble(PAPER_LORENZ, ParameterSchedule(((1.5, "rho", 31.0),)), cfg, starts)
    for x0, member in zip(starts, members):
        single = simulate_lorenz(
            PAPER_LORENZ, ParameterSchedule(((1.5, "rho", 31.0),)), SimConfig(100.0, 3.0, x0, burn_in=1.0)
        )
        assert member.equals(single)


def test_ensemble_validation():
    cfg = SimConfig(100.0, 1.0, (1.0, 1.0, 1.0))
    with pytest.raises(ConfigurationError):
        simulate_lorenz_ensemble(PAPER_LORENZ, None, cfg, np.ones((2, 2)))
    with pytest.raises(ConfigurationError):
        simulate_lorenz_ensemble(PAPER_LORENZ, None, cfg, [[1.0, np.nan, 1.0]])
    with pytest.raises(SimulationDiverged) as info:
        simulate_lorenz_ensemble(PAPER_LORENZ, None, replace(cfg, divergence_bound=30.0), [[0.0, 0.0, 0.0], [1.0, 1.0, 1.0]])
    assert info.value.component in (0, 1, 2)


def test_burn_in_shifts_the_start():
    long = simulate_lorenz(PAPER_LORENZ, None, SimConfig(100.0, 3.0, (1.0, 1.0, 1.0)))
    burned = simulate_lorenz(PAPER_LORENZ, None, SimConfig(100.0, 2.0, (1.0, 1.0, 1.0), burn_in=1.0))
    assert np.allclose(long.data[:, 100:], burned.data, atol=1e-9)


def test_divergence_reports_time():
    cfg = SimConfig(100.0, 5.0, (1.0, 1.0, 1.0), divergence_bound=30.0)
    with pytest.raises(SimulationDiverged) as info:
        simulate_lorenz(PAPER_LORENZ, None, cfg)
    assert 0 < info.value.time < 5


# ---------------------------------------------------------------- power system


def _equilibrium(params, closures):
    f = power3bus_rhs(params, closures)
    _, _, guess = default_power3bus()
    x = optimize.fsolve(lambda v: f(0.0, v), np.array(guess), xtol=1e-14)
    for _ in range(5):  # Newton polish with a finite-difference Jacobian
        r = f(0.0, x)
        jac = np.empty((6, 6))
        for j in range(6):
            h = 1e-7 * max(1.0, abs(x[j]))
            e = np.zeros(6)
            e[j] = h
            jac[:, j] = (f(0.0, x + e) - f(0.0, x - e)) / (2 * h)
        x = x - np.linalg.solve(jac, r)
    return x, np.max(np.abs(f(0.0, x)))


def test_power_equilibrium_is_constant():
    params, closures, _ = default_power3bus()
    x_eq, resid = _equilibrium(params, closures)
    assert resid < 1e-12
    series = simulate_power3bus(params, closures, None, SimConfig(100.0, 10.0, tuple(x_eq)))
    assert np.max(np.abs(series.data - x_eq[:, None])) < 1e-9


def test_power_zero_base_frequency_freezes_rotor_angle():
    params = Power3BusParams(omega_B=0.0)
    _, closures, x0 = default_power3bus()
    series = simulate_power3bus(params, closures, None, SimConfig(100.0, 2.0, x0))
    assert np.all(series.data[0] == x0[0])


def test_power_default_bounded_and_not_settling():
    params, closures, x0 = default_power3bus()
    series = simulate_power3bus(params, closures, None, SimConfig(100.0, 100.0, x0))
    assert np.isfinite(series.data).all()
    assert np.max(np.abs(series.data)) < 10
    tail = series.data[:, -2000:]
    spread = tail.max(axis=1) - tail.min(axis=1)
    assert np.all(spread > 1e-4), spread
    assert [c.name for c in series.channels] == ["delta_m", "s_m", "E_q_prime", "E_fd", "delta_L", "V_L"]


def test_power_params_validation():
    with pytest.raises(ConfigurationError):
        Power3BusParams(H=0.0)
    with pytest.raises(ConfigurationError):
        Power3BusParams(q1=0.0)


def test_constant_load_fallback():
    class Frozen:
        def __call__(self, state, params):
            return ThreeBusNetwork()(state, params)._replace(P=None, Q=None)

    params, _, x0 = default_power3bus()
    f = power3bus_rhs(params, Frozen())
    assert np.isfinite(f(0.0, np.array(x0))).all()


# ---------------------------------------------------------------- faults and noise


def _series(n=300, rate=100.0, channels=3):
    t = np.arange(n) / rate
    data = np.array([np.sin(2 * np.pi * 5 * t - 2 * np.pi * k / 3) for k in range(channels)])
    return TimeSeries(0.0, rate, tuple(Channel(k + 1, f"c{k + 1}") for k in range(channels)), data)


def test_fault_zero_magnitude_is_identity():
    s = _series()
    out = inject_fault(s, FaultSpec(0.5, 1.0, (1, 2)))
    assert out.equals(s)


def test_fault_sample_range():
    s = _series()
    out = inject_fault(s, FaultSpec(1.0, 1.2, (2,), zero_seq_amplitude=1.0))
    changed = np.flatnonzero(out.data[1] != s.data[1])
    assert changed[0] == 100 and changed[-1] == 120 and changed.size == 21
    assert np.array_equal(out.data[[0, 2]], s.data[[0, 2]])


def test_fault_raises_zero_sequence():
    s = _series(channels=3, rate=640.0, n=640)  # 5 Hz, 128 samples per cycle
    out = inject_fault(s, FaultSpec(0.4, 0.6, (1, 2, 3), zero_seq_amplitude=0.2, zero_seq_frequency=5.0))
    before = zero_sequence_indicator(s, 128)
    after = zero_sequence_indicator(out, 128)
    assert after[2] > 5 * before[2] + 0.1  # cycle 2 spans exactly [0.4, 0.6) s
    assert np.allclose(after[[0, 1, 4]], before[[0, 1, 4]])


def test_fault_validation():
    with pytest.raises(ConfigurationError):
        FaultSpec(0.0, 1.0, ())
    with pytest.raises(ConfigurationError):
        inject_fault(_series(), FaultSpec(2.0, 5.0, (1,)))


def test_noise_snr():
    s = _series(n=100_000, rate=1000.0, channels=1)
    s = s.with_data(s.data * math.sqrt(2))  # unit mean-square power
    noisy = add_noise(s, 20.0, seed=4)
    assert np.mean((noisy.data - s.data) ** 2) == pytest.approx(0.01, rel=0.1)
    assert add_noise(s, 20.0, seed=4).equals(noisy)
    assert add_noise(s, math.inf, seed=4).equals(s)


def test_noise_zero_power_channel():
    s = _series()
    s = s.with_data(np.vstack([s.data[:2], np.zeros(300)]))
    with pytest.raises(ConfigurationError):
        add_noise(s, 10.0, seed=0)
