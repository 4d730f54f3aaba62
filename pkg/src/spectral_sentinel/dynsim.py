"""Fixed-step simulation of the Lorenz system and a chaotic three-bus power system.

Both simulators integrate with classical RK4 at a fixed step, record at a
lower sample rate, and apply piecewise-constant parameter changes from a
:class:`ParameterSchedule`. Also provides the synthetic fault and noise
injectors used to build desk-scale recorder data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable, NamedTuple, Protocol, Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigurationError, IntegrationError, SimulationDiverged
from .series import Channel, TimeSeries

__all__ = [
    "LorenzParams",
    "Power3BusParams",
    "Power3BusState",
    "ClosureValues",
    "AlgebraicClosures",
    "ThreeBusNetwork",
    "ParameterSchedule",
    "SimConfig",
    "FaultSpec",
    "rk4_step",
    "lorenz_rhs",
    "power3bus_rhs",
    "simulate_lorenz",
    "simulate_lorenz_ensemble",
    "simulate_power3bus",
    "default_power3bus",
    "inject_fault",
    "add_noise",
]

Dynamics = Callable[[float, NDArray[np.float64]], NDArray[np.float64]]


# --------------------------------------------------------------------------
# integrator


def rk4_step(state: NDArray[np.float64], t: float, dt: float, dynamics: Dynamics) -> NDArray[np.float64]:
    """Advance ``state`` from ``t`` to ``t + dt`` with classical fourth-order Runge-Kutta.

    ``dynamics(t, x)`` returns the time derivative. Raises
    :class:`IntegrationError` naming the first non-finite derivative component.
    """
    if not dt > 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    x = np.asarray(state, dtype=np.float64)
    half = 0.5 * dt
    k1 = _checked(dynamics(t, x), t)
    k2 = _checked(dynamics(t + half, x + half * k1), t + half)
    k3 = _checked(dynamics(t + half, x + half * k2), t + half)
    k4 = _checked(dynamics(t + dt, x + dt * k3), t + dt)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _rk4_unchecked(x: NDArray[np.float64], t: float, dt: float, f: Dynamics) -> NDArray[np.float64]:
    # same arithmetic as rk4_step; the driver validates the result once per step instead
    half = 0.5 * dt
    k1 = f(t, x)
    k2 = f(t + half, x + half * k1)
    k3 = f(t + half, x + half * k2)
    k4 = f(t + dt, x + dt * k3)
    return x + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _checked(deriv: NDArray[np.float64], t: float) -> NDArray[np.float64]:
    deriv = np.asarray(deriv, dtype=np.float64)
    finite = np.isfinite(deriv)
    if not finite.all():
        comp = int(np.argwhere(~finite)[0][0])
        raise IntegrationError(
            f"non-finite derivative in component {comp} at t={t:.6g}", component=comp, time=t
        )
    return deriv


# --------------------------------------------------------------------------
# configuration types


@dataclass(frozen=True)
class LorenzParams:
    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0

    def __post_init__(self) -> None:
        if not self.sigma > 0:
            raise ConfigurationError(f"sigma must be > 0, got {self.sigma}")
        if not self.beta > 0:
            raise ConfigurationError(f"beta must be > 0, got {self.beta}")
        if not self.rho >= 0:
            raise ConfigurationError(f"rho must be >= 0, got {self.rho}")


@dataclass(frozen=True)
class ParameterSchedule:
    """Ordered ``(time, parameter, value)`` changes; times strictly increasing."""

    changes: tuple[tuple[float, str, float], ...] = ()

    def __post_init__(self) -> None:
        changes = tuple((float(t), str(n), float(v)) for t, n, v in self.changes)
        object.__setattr__(self, "changes", changes)
        for (t_prev, _, _), (t_next, _, _) in zip(changes, changes[1:]):
            if not t_next > t_prev:
                raise ConfigurationError(f"schedule times must be strictly increasing ({t_prev} then {t_next})")

    def validate(self, names: Sequence[str], duration: float) -> None:
        for t, name, _ in self.changes:
            if name not in names:
                raise ConfigurationError(f"schedule names unknown parameter {name!r}; valid: {sorted(names)}")
            if t < 0 or t > duration:
                raise ConfigurationError(f"schedule time {t} s outside [0, {duration}] s")


@dataclass(frozen=True)
class SimConfig:
    """Integration and sampling settings.

    ``dt`` defaults to a tenth of the sample interval. ``burn_in`` seconds are
    integrated with the initial parameters before recording starts, so the
    first recorded sample is the state after the burn-in.
    """

    sample_rate: float
    duration: float
    initial_state: tuple[float, ...]
    dt: float | None = None
    seed: int = 0
    burn_in: float = 0.0
    divergence_bound: float = 1e6

    def __post_init__(self) -> None:
        object.__setattr__(self, "initial_state", tuple(float(v) for v in self.initial_state))
        if not self.sample_rate > 0:
            raise ConfigurationError(f"sample_rate must be > 0, got {self.sample_rate}")
        if not self.duration > 0:
            raise ConfigurationError(f"duration must be > 0, got {self.duration}")
        if self.dt is None:
            object.__setattr__(self, "dt", 1.0 / (10.0 * self.sample_rate))
        if not self.dt > 0:
            raise ConfigurationError(f"dt must be > 0, got {self.dt}")
        if self.burn_in < 0:
            raise ConfigurationError("burn_in must be >= 0")
        if not all(math.isfinite(v) for v in self.initial_state):
            raise ConfigurationError("initial_state must be finite")
        ratio = 1.0 / (self.sample_rate * self.dt)
        if abs(ratio - round(ratio)) > 1e-9 * max(1.0, ratio) or round(ratio) < 1:
            raise ConfigurationError(
                f"sample interval {1 / self.sample_rate} s is not an integer multiple of dt={self.dt}"
            )
        n = self.duration * self.sample_rate
        if abs(n - round(n)) > 1e-9 * max(1.0, n):
            raise ConfigurationError("duration x sample_rate must be an integer sample count")

    @property
    def steps_per_sample(self) -> int:
        return int(round(1.0 / (self.sample_rate * self.dt)))

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    def step_of(self, time: float) -> int:
        """Index of the first integration step whose start time is >= ``time``."""
        return int(math.ceil(time / self.dt - 1e-9))


# --------------------------------------------------------------------------
# generic driver


def _run(
    make_rhs: Callable[[object], Dynamics],
    params: object,
    schedule: ParameterSchedule,
    cfg: SimConfig,
    n_state: int,
    x0: NDArray[np.float64] | None = None,
) -> NDArray[np.float64]:
    # x0 of shape (n_state, M) integrates M trajectories at once; output is then (n_state, M, n_samples)
    x = np.array(cfg.initial_state if x0 is None else x0, dtype=np.float64)
    if x.shape[0] != n_state:
        raise ConfigurationError(f"initial_state needs {n_state} components, got {x.shape[0]}")
    dt = cfg.dt
    k = cfg.steps_per_sample
    n_samples = cfg.n_samples
    total = n_samples * k
    pending = {cfg.step_of(t): (name, value) for t, name, value in schedule.changes}
    out = np.empty(x.shape + (n_samples,))
    rhs = make_rhs(params)
    bound = cfg.divergence_bound

    def step(x: NDArray[np.float64], t: float) -> NDArray[np.float64]:
        y = _rk4_unchecked(x, t, dt, rhs)
        if not (np.abs(y) <= bound).all():
            if not np.isfinite(y).all():
                rk4_step(x, t, dt, rhs)  # raises IntegrationError naming the component
            _check_bound(y, t + dt, bound)
        return y

    n_burn = int(round(cfg.burn_in / dt))
    for i in range(-n_burn, 0):
        x = step(x, i * dt)

    for i in range(total):
        if i in pending:
            name, value = pending[i]
            params = replace(params, **{name: value})
            rhs = make_rhs(params)
        if i % k == 0:
            out[..., i // k] = x
        x = step(x, i * dt)
    return out


def _check_bound(x: NDArray[np.float64], t: float, bound: float) -> None:
    big = ~(np.abs(x) <= bound)
    if big.any():
        comp = int(np.argwhere(big)[0][0])
        raise SimulationDiverged(
            f"state component {comp} exceeded {bound:g} at t={t:.6g} s", component=comp, time=t
        )


# --------------------------------------------------------------------------
# Lorenz


def lorenz_rhs(p: LorenzParams) -> Dynamics:
    sigma, rho, beta = p.sigma, p.rho, p.beta

    def f(t: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
        x1, x2, x3 = x
        return np.array([sigma * (x2 - x1), rho * x1 - x2 - x1 * x3, -beta * x3 + x1 * x2])

    return f


LORENZ_CHANNELS = (Channel(1, "x1"), Channel(2, "x2"), Channel(3, "x3"))


def simulate_lorenz(
    params: LorenzParams, schedule: ParameterSchedule | None, cfg: SimConfig
) -> TimeSeries:
    """Three-channel Lorenz trajectory sampled at ``cfg.sample_rate``."""
    schedule = schedule or ParameterSchedule()
    schedule.validate([f.name for f in fields(LorenzParams)], cfg.duration)
    data = _run(lorenz_rhs, params, schedule, cfg, 3)
    return TimeSeries(0.0, cfg.sample_rate, LORENZ_CHANNELS, data)


def simulate_lorenz_ensemble(
    params: LorenzParams,
    schedule: ParameterSchedule | None,
    cfg: SimConfig,
    initial_states: ArrayLike,
) -> list[TimeSeries]:
    """One trajectory per row of ``initial_states`` (shape ``(M, 3)``), integrated together.

    Each member follows exactly the arithmetic of :func:`simulate_lorenz`;
    ``cfg.initial_state`` is ignored.
    """
    x0 = np.asarray(initial_states, dtype=np.float64)
    if x0.ndim != 2 or x0.shape[1] != 3 or x0.shape[0] == 0:
        raise ConfigurationError(f"initial_states must have shape (M, 3), got {x0.shape}")
    if not np.isfinite(x0).all():
        raise ConfigurationError("initial_states must be finite")
    schedule = schedule or ParameterSchedule()
    schedule.validate([f.name for f in fields(LorenzParams)], cfg.duration)
    data = _run(lorenz_rhs, params, schedule, cfg, 3, x0.T.copy())
    return [TimeSeries(0.0, cfg.sample_rate, LORENZ_CHANNELS, data[:, m]) for m in range(x0.shape[0])]


# --------------------------------------------------------------------------
# three-bus power system


@dataclass(frozen=True)
class Power3BusParams:
    """Generator, exciter and dynamic-load constants (per unit unless noted).

    ``P`` and ``Q`` are constant load-bus injections used only when the
    closures do not supply state-dependent values.
    """

    omega_B: float = 2 * math.pi * 60
    H: float = 0.3 * 2 * math.pi * 60 / 2
    d: float = 0.05 * 2 * math.pi * 60
    P_m: float = 1.0
    T_d0_prime: float = 8.0
    x_d: float = 0.25
    x_d_prime: float = 0.2
    T_A: float = 0.5
    K_A: float = 2.0
    V_ref: float = 1.55
    q1: float = -0.03
    q2: float = -2.8
    q3: float = 2.1
    B_c: float = 12.0
    p1: float = 0.4
    p2: float = 0.3 * 8.5
    p3: float = 0.3
    P0: float = 0.6
    Q0: float = 1.3
    P1d: float = 0.0
    Q1d: float = 10.91
    P: float = 0.0
    Q: float = 0.0

    def __post_init__(self) -> None:
        for name in ("H", "T_d0_prime", "T_A"):
            if not getattr(self, name) > 0:
                raise ConfigurationError(f"{name} must be > 0")
        for name in ("q1", "p2"):
            if getattr(self, name) == 0:
                raise ConfigurationError(f"{name} must be nonzero")


class Power3BusState(NamedTuple):
    delta_m: float
    s_m: float
    E_q_prime: float
    E_fd: float
    delta_L: float
    V_L: float


class ClosureValues(NamedTuple):
    P_g: float
    I_d: float
    V_t: float
    P: float | None = None
    Q: float | None = None


class AlgebraicClosures(Protocol):
    def __call__(self, state: Power3BusState, params: Power3BusParams) -> ClosureValues: ...


@dataclass(frozen=True)
class ThreeBusNetwork:
    """Default closures: generator and slack bus feed the load bus through lossy lines.

    The generator EMF ``E'_q`` sits behind admittance ``Y_m`` at angle
    ``theta_m``; the slack source ``E0`` behind ``Y0`` at ``theta0``. The
    terminal voltage is taken at fraction ``terminal_fraction`` of the series
    path from the internal EMF towards the load bus.
    """

    E0: float = 1.0
    Y0: float = 20.0
    theta0: float = math.radians(-5.0)
    Y_m: float = 5.0
    theta_m: float = math.radians(-5.0)
    terminal_fraction: float = 0.5

    def __call__(self, state: Power3BusState, params: Power3BusParams) -> ClosureValues:
        dm, _, eq, _, dl, v = state
        ym, thm = self.Y_m, self.theta_m
        y0, th0 = self.Y0, self.theta0
        p_g = -eq * ym * v * math.sin(dl - dm - thm) - eq * eq * ym * math.sin(thm)
        p = (
            -self.E0 * y0 * v * math.sin(dl + th0)
            - eq * ym * v * math.sin(dl - dm + thm)
            + (y0 * math.sin(th0) + ym * math.sin(thm)) * v * v
        )
        q = (
            self.E0 * y0 * v * math.cos(dl + th0)
            + eq * ym * v * math.cos(dl - dm + thm)
            - (y0 * math.cos(th0) + ym * math.cos(thm)) * v * v
        )
        i_d = ym * (eq - v * math.cos(dm - dl))
        a = self.terminal_fraction
        re = (1 - a) * eq * math.cos(dm) + a * v * math.cos(dl)
        im = (1 - a) * eq * math.sin(dm) + a * v * math.sin(dl)
        return ClosureValues(p_g, i_d, math.hypot(re, im), p, q)


def power3bus_rhs(params: Power3BusParams, closures: AlgebraicClosures) -> Dynamics:
    p = params

    def f(t: float, x: NDArray[np.float64]) -> NDArray[np.float64]:
        st = Power3BusState(*(float(v) for v in x))
        cv = closures(st, p)
        load_p = p.P if cv.P is None else cv.P
        load_q = p.Q if cv.Q is None else cv.Q
        v = st.V_L
        d_delta_l = (load_q - p.Q1d - p.Q0 - p.q2 * v - (p.q3 - p.B_c) * v * v) / p.q1
        return np.array(
            [
                p.omega_B * st.s_m,
                (-p.d * st.s_m + p.P_m - cv.P_g) / (2.0 * p.H),
                (-st.E_q_prime + (p.x_d - p.x_d_prime) * cv.I_d + st.E_fd) / p.T_d0_prime,
                (-st.E_fd + p.K_A * (p.V_ref - cv.V_t)) / p.T_A,
                d_delta_l,
                (load_p - p.P1d - p.P0 - p.p3 * v - p.p1 * d_delta_l) / p.p2,
            ]
        )

    return f


POWER_CHANNELS = (
    Channel(1, "delta_m", "rad"),
    Channel(2, "s_m", ""),
    Channel(3, "E_q_prime", "pu"),
    Channel(4, "E_fd", "pu"),
    Channel(5, "delta_L", "rad"),
    Channel(6, "V_L", "pu"),
)

DEFAULT_POWER_INITIAL_STATE = (0.099633, -0.000363, 1.005187, 1.019626, -0.023917, 1.096992)


def default_power3bus() -> tuple[Power3BusParams, ThreeBusNetwork, tuple[float, ...]]:
    """Shipped parameter set, closures and initial state (an aperiodic oscillation regime)."""
    return Power3BusParams(), ThreeBusNetwork(), DEFAULT_POWER_INITIAL_STATE


def simulate_power3bus(
    params: Power3BusParams,
    closures: AlgebraicClosures | None,
    schedule: ParameterSchedule | None,
    cfg: SimConfig,
) -> TimeSeries:
    """Six-channel trajectory (delta_m, s_m, E'_q, E_fd, delta_L, V_L)."""
    closures = closures if closures is not None else ThreeBusNetwork()
    schedule = schedule or ParameterSchedule()
    schedule.validate([f.name for f in fields(Power3BusParams)], cfg.duration)
    data = _run(lambda prm: power3bus_rhs(prm, closures), params, schedule, cfg, 6)
    return TimeSeries(0.0, cfg.sample_rate, POWER_CHANNELS, data)


# --------------------------------------------------------------------------
# synthetic disturbances


@dataclass(frozen=True)
class FaultSpec:
    """Additive fault signature applied to ``channels`` over ``[start, end]`` seconds.

    Each affected channel receives the same zero-sequence component
    ``zero_seq_amplitude * cos(2 pi zero_seq_frequency t + zero_seq_phase)``
    (a constant offset when the frequency is 0) plus a decaying transient
    ``transient_amplitude * exp(-(t - start)/transient_decay) * sin(2 pi transient_frequency (t - start))``.
    """

    start: float
    end: float
    channels: tuple[int, ...]
    zero_seq_amplitude: float = 0.0
    zero_seq_frequency: float = 0.0
    zero_seq_phase: float = 0.0
    transient_amplitude: float = 0.0
    transient_frequency: float = 0.0
    transient_decay: float = 0.01

    def __post_init__(self) -> None:
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if not self.channels:
            raise ConfigurationError("fault must affect at least one channel")
        if not self.end >= self.start:
            raise ConfigurationError("fault end must not precede its start")
        if not self.transient_decay > 0:
            raise ConfigurationError("transient_decay must be > 0")


def inject_fault(series: TimeSeries, spec: FaultSpec) -> TimeSeries:
    """Copy of ``series`` with the fault signature added; other channels untouched."""
    t_end = series.t0 + (series.n_samples - 1) / series.sample_rate
    if spec.start < series.t0 or spec.end > t_end + 1e-9 / series.sample_rate:
        raise ConfigurationError(f"fault window [{spec.start}, {spec.end}] outside series [{series.t0}, {t_end}]")
    rows = series.rows(spec.channels)
    fs = series.sample_rate
    i0 = int(math.ceil((spec.start - series.t0) * fs - 1e-9))
    i1 = int(math.floor((spec.end - series.t0) * fs + 1e-9))
    idx = np.arange(i0, i1 + 1)
    t = series.t0 + idx / fs
    tau = t - spec.start
    signature = spec.zero_seq_amplitude * np.cos(2 * np.pi * spec.zero_seq_frequency * t + spec.zero_seq_phase)
    signature = signature + spec.transient_amplitude * np.exp(-tau / spec.transient_decay) * np.sin(
        2 * np.pi * spec.transient_frequency * tau
    )
    data = series.data.copy()
    for r in rows:
        data[r, i0 : i1 + 1] += signature
    return series.with_data(data)


def add_noise(series: TimeSeries, snr_db: float, seed: int) -> TimeSeries:
    """Add white Gaussian noise at ``snr_db`` relative to each channel's mean-square power.

    ``snr_db = math.inf`` returns an unmodified copy.
    """
    if math.isnan(snr_db) or snr_db == -math.inf:
        raise ConfigurationError(f"snr_db must be finite or +inf, got {snr_db}")
    if snr_db == math.inf:
        return series.with_data(series.data.copy())
    power = np.mean(series.data**2, axis=1)
    zero = power == 0
    if zero.any():
        ch = series.channels[int(np.argmax(zero))]
        raise ConfigurationError(f"channel {ch.id} ({ch.name}) has zero power; SNR undefined")
    rng = np.random.default_rng(seed)
    scale = np.sqrt(power / 10.0 ** (snr_db / 10.0))
    noise = rng.standard_normal(series.data.shape) * scale[:, None]
    return series.with_data(series.data + noise)
