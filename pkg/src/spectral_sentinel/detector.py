"""Sliding-window LES series, scoring, change-point events and the zero-sequence baseline."""

from __future__ import annotations

import csv
import io
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ArityError, ConfigurationError, NumericError, ParseError, WindowSizeError, ZeroVarianceError
from .rmt import (
    SpectralNull,
    les_mean,
    les_variance,
)
from .series import TimeSeries, atomic_write_text
from .testfunctions import TestFunction

__all__ = [
    "WindowSpec",
    "LESSeries",
    "DetectionConfig",
    "DetectionEvent",
    "DetectionResult",
    "METHODS",
    "sliding_windows",
    "window_count",
    "les_series",
    "zscore_null",
    "null_scores",
    "reference_score",
    "detect_changepoints",
    "detect",
    "zero_sequence_indicator",
    "calibrated_threshold",
    "null_threshold",
    "les_series_to_csv_text",
    "load_les_csv",
    "event_report",
]

METHODS = ("null-zscore", "reference-window")


@dataclass(frozen=True)
class WindowSpec:
    length: int
    stride: int = 1

    def __post_init__(self) -> None:
        if self.length < 2:
            raise ConfigurationError(f"window length must be >= 2, got {self.length}")
        if self.stride < 1:
            raise ConfigurationError(f"window stride must be >= 1, got {self.stride}")

    def check_channels(self, n_channels: int) -> None:
        if self.length < n_channels:
            raise ConfigurationError(
                f"window length {self.length} < channel count {n_channels} gives c = N/T > 1"
            )


def window_count(n_samples: int, spec: WindowSpec) -> int:
    if n_samples < spec.length:
        raise WindowSizeError(f"series of {n_samples} samples is shorter than one window ({spec.length})")
    return (n_samples - spec.length) // spec.stride + 1


def sliding_windows(series: TimeSeries | NDArray[np.float64], spec: WindowSpec) -> list[NDArray[np.float64]]:
    """Window ``k`` covers samples ``[k*stride, k*stride + length)`` (views, not copies)."""
    data = series.data if isinstance(series, TimeSeries) else np.asarray(series)
    n = window_count(data.shape[1], spec)
    return [data[:, k * spec.stride : k * spec.stride + spec.length] for k in range(n)]


@dataclass(frozen=True, eq=False)
class LESSeries:
    """One statistic per window, stamped with the time of the window's last sample."""

    times: NDArray[np.float64]
    values: NDArray[np.float64]
    phi: str
    channels: tuple[int, ...]
    n_channels: int
    window: int
    stride: int
    kappa4: NDArray[np.float64] | None = None

    def __post_init__(self) -> None:
        times = np.asarray(self.times, dtype=np.float64)
        values = np.asarray(self.values, dtype=np.float64)
        if times.shape != values.shape or times.ndim != 1:
            raise ConfigurationError("times and values must be 1-D and of equal length")
        if np.any(np.diff(times) <= 0):
            raise ConfigurationError("window times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "channels", tuple(self.channels))

    @property
    def c(self) -> float:
        return self.n_channels / self.window

    def __len__(self) -> int:
        return self.values.size


# doubles per batch of stacked windows (~128 MB)
_BATCH_BUDGET = 1 << 24


def les_series(
    series: TimeSeries,
    spec: WindowSpec,
    phi: TestFunction,
    standardize: bool = True,
    subset: Sequence[int] | None = None,
    workers: int | None = None,
) -> LESSeries:
    """Statistic ``sum(phi(eig(M)))`` for every window of the selected channels.

    With ``standardize`` each window's rows are z-scored before the
    covariance is formed. Windows are processed as stacked batches;
    ``workers > 1`` spreads the batches over a thread pool. Output order is by
    window index either way, and each window also records the excess
    kurtosis of its (possibly standardized) entries.
    """
    ids = list(series.channel_ids if subset is None else subset)
    if not ids:
        raise ConfigurationError("channel subset is empty")
    rows = series.rows(ids)
    spec.check_channels(len(rows))
    data = series.data[rows]
    n_win = window_count(data.shape[1], spec)
    n = len(rows)
    bound = phi.bind(n / spec.length)
    view = np.lib.stride_tricks.sliding_window_view(data, spec.length, axis=1)[:, :: spec.stride][:, :n_win]
    size = max(1, _BATCH_BUDGET // (n * spec.length))
    batches = [(a, min(a + size, n_win)) for a in range(0, n_win, size)]

    def run(batch: tuple[int, int]) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
        lo, hi = batch
        w = np.ascontiguousarray(view[:, lo:hi].transpose(1, 0, 2))  # (windows, N, T)
        if standardize:
            w = _standardize_stack(w, lo, ids)
        cov = w @ w.transpose(0, 2, 1) / n
        try:
            eigs = np.linalg.eigvalsh(0.5 * (cov + cov.transpose(0, 2, 1)))
        except np.linalg.LinAlgError as exc:
            raise NumericError(f"symmetric eigen-solver did not converge in windows {lo}-{hi - 1}: {exc}") from exc
        return bound(eigs).sum(axis=1), _kurtosis_stack(w)

    if workers and workers > 1 and len(batches) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run, batches))
    else:
        results = [run(b) for b in batches]
    taus = np.concatenate([r[0] for r in results])
    k4s = np.concatenate([r[1] for r in results])
    ends = series.t0 + (np.arange(n_win) * spec.stride + spec.length - 1) / series.sample_rate
    return LESSeries(ends, taus, phi.name, tuple(ids), n, spec.length, spec.stride, k4s)


def _standardize_stack(w: NDArray[np.float64], first: int, ids: Sequence[int]) -> NDArray[np.float64]:
    # same rule as rmt.standardize_rows, applied to every window of the stack
    sd = w.std(axis=2, ddof=1)
    bad = ~(sd > 1e-12)
    if bad.any():
        k, r = (int(v) for v in np.argwhere(bad)[0])
        raise ZeroVarianceError(
            f"channel {ids[r]} has zero variance in window {first + k}", channel=ids[r], window=first + k
        )
    centered = w - w.mean(axis=2, keepdims=True)
    return centered / centered.std(axis=2, keepdims=True)


def _kurtosis_stack(w: NDArray[np.float64]) -> NDArray[np.float64]:
    flat = w.reshape(w.shape[0], -1)
    d = flat - flat.mean(axis=1, keepdims=True)
    d2 = d * d
    m2 = d2.mean(axis=1)
    m4 = (d2 * d2).mean(axis=1)
    out = np.full(w.shape[0], math.nan)
    ok = m2 > 0
    out[ok] = m4[ok] / m2[ok] ** 2 - 3.0
    return out


# --------------------------------------------------------------------------
# scoring


def zscore_null(
    tau: float, phi: TestFunction, n: int, c: float, kappa4: float = 0.0, *, real_bias: bool = False
) -> float:
    """``(tau - E tau) / sigma`` under the Marchenko-Pastur null."""
    mean = les_mean(phi, n, c, real_bias=real_bias)
    var = les_variance(phi, SpectralNull(c, kappa4))
    if not var > 0:
        raise NumericError(f"null variance {var:.3g} is not positive")
    return (tau - mean) / math.sqrt(var)


def null_scores(
    les_s: LESSeries, phi: TestFunction, kappa4: float | None = None, *, real_bias: bool = False
) -> NDArray[np.float64]:
    """Null z-score per window; ``kappa4=None`` uses each window's own estimate."""
    n, c = les_s.n_channels, les_s.c
    mean = les_mean(phi, n, c, real_bias=real_bias)
    if kappa4 is not None or les_s.kappa4 is None:
        k4 = np.full(len(les_s), 0.0 if kappa4 is None else kappa4)
    else:
        k4 = np.maximum(np.nan_to_num(les_s.kappa4, nan=0.0), -2.0)
    cache: dict[float, float] = {}
    out = np.empty(len(les_s))
    for i, (tau, kk) in enumerate(zip(les_s.values, k4)):
        key = round(float(kk), 12)
        if key not in cache:
            cache[key] = les_variance(phi, SpectralNull(c, key))
        var = cache[key]
        if not var > 0:
            raise NumericError(f"null variance {var:.3g} is not positive")
        out[i] = (tau - mean) / math.sqrt(var)
    return out


def reference_score(values: LESSeries | ArrayLike, reference: range | tuple[int, int], *, signed: bool = False):
    """``|tau - mean_ref| / std_ref`` per window, with population std over the reference windows."""
    tau = values.values if isinstance(values, LESSeries) else np.asarray(values, dtype=np.float64)
    lo, hi = (reference.start, reference.stop) if isinstance(reference, range) else reference
    if hi - lo < 8:
        raise ConfigurationError(f"reference needs >= 8 windows, got {hi - lo}")
    if lo < 0 or hi > tau.size:
        raise ConfigurationError(f"reference [{lo}, {hi}) outside the {tau.size} available windows")
    ref = tau[lo:hi]
    mu = ref.mean()
    sd = ref.std()
    if not sd > 1e-12 * max(abs(mu), 1.0):
        raise NumericError("reference windows have zero dispersion")
    z = (tau - mu) / sd
    return z if signed else np.abs(z)


@dataclass(frozen=True)
class DetectionConfig:
    """Threshold-crossing rule.

    For ``reference-window`` scoring ``reference`` is the initial reference span
    ``[start, stop)`` in window indices. With ``reanchor`` set, after each
    event the reference is rebuilt from the same number of windows starting
    ``min_gap`` windows after the event, and detection re-arms once that new
    reference is complete.
    """

    method: str = "reference-window"
    threshold: float = 3.0
    reference: tuple[int, int] = (0, 30)
    min_gap: int = 20
    reanchor: bool = True
    kappa4: float | None = None
    real_bias: bool = False

    def __post_init__(self) -> None:
        if self.method not in METHODS:
            raise ConfigurationError(f"unknown method {self.method!r}; choose from {METHODS}")
        if not (self.threshold > 0 and math.isfinite(self.threshold)):
            raise ConfigurationError(f"threshold must be > 0, got {self.threshold}")
        object.__setattr__(self, "reference", tuple(int(v) for v in self.reference))
        lo, hi = self.reference
        if self.method == "reference-window" and not hi > lo >= 0:
            raise ConfigurationError("reference range must be non-empty")
        if self.min_gap < 0:
            raise ConfigurationError("min_gap must be >= 0")


@dataclass(frozen=True)
class DetectionEvent:
    window: int
    time: float
    score: float
    method: str
    channels: tuple[int, ...] = ()


@dataclass(frozen=True, eq=False)
class DetectionResult:
    scores: NDArray[np.float64]
    events: list[DetectionEvent]
    references: list[tuple[int, int]] = field(default_factory=list)


def detect_changepoints(
    scores: ArrayLike,
    cfg: DetectionConfig,
    times: ArrayLike | None = None,
    channels: Sequence[int] = (),
    start: int = 0,
) -> list[DetectionEvent]:
    """Events at upward threshold crossings from index ``start`` on.

    A crossing within ``min_gap`` windows of the previous event is suppressed.
    """
    s = np.asarray(scores, dtype=np.float64)
    if not np.isfinite(s).all():
        raise ConfigurationError("scores must be finite")
    t = np.arange(s.size, dtype=float) if times is None else np.asarray(times, dtype=float)
    events: list[DetectionEvent] = []
    last = None
    thr = cfg.threshold
    for k in range(start, s.size):
        prev_below = k == start or s[k - 1] < thr
        if s[k] >= thr and prev_below:
            if last is not None and k - last < cfg.min_gap:
                continue
            events.append(DetectionEvent(k, float(t[k]), float(s[k]), cfg.method, tuple(channels)))
            last = k
    return events


def detect(les_s: LESSeries, cfg: DetectionConfig, phi: TestFunction | None = None) -> DetectionResult:
    """Score ``les_s`` with ``cfg.method`` and extract events."""
    if cfg.method == "null-zscore":
        if phi is None:
            from .testfunctions import parse_phi

            phi = parse_phi(les_s.phi)
        scores = null_scores(les_s, phi, cfg.kappa4, real_bias=cfg.real_bias)
        return DetectionResult(scores, detect_changepoints(scores, cfg, les_s.times, les_s.channels))

    lo, hi = cfg.reference
    width = hi - lo
    scores = reference_score(les_s, (lo, hi))
    if not cfg.reanchor:
        events = detect_changepoints(scores, cfg, les_s.times, les_s.channels, start=hi)
        return DetectionResult(scores, events, [(lo, hi)])

    events: list[DetectionEvent] = []
    refs = [(lo, hi)]
    armed = hi
    n = len(les_s)
    while armed < n:
        found = detect_changepoints(scores[:n], cfg, les_s.times, les_s.channels, start=armed)
        if not found:
            break
        ev = found[0]
        events.append(ev)
        lo, hi = ev.window + cfg.min_gap, ev.window + cfg.min_gap + width
        if hi > n:
            break
        refs.append((lo, hi))
        fresh = reference_score(les_s, (lo, hi))
        scores = scores.copy()
        scores[hi:] = fresh[hi:]
        armed = hi
    return DetectionResult(scores, events, refs)


# --------------------------------------------------------------------------
# classical baseline


def zero_sequence_indicator(currents: TimeSeries, cycle: int) -> NDArray[np.float64]:
    """Per-cycle RMS of ``i0 = (iA + iB + iC) / 3`` over complete cycles."""
    if currents.n_channels != 3:
        raise ArityError(f"zero-sequence indicator needs exactly 3 current channels, got {currents.n_channels}")
    if cycle < 2:
        raise ConfigurationError(f"cycle must be >= 2 samples, got {cycle}")
    i0 = currents.data.sum(axis=0) / 3.0
    n = i0.size // cycle
    if n == 0:
        raise WindowSizeError(f"series of {i0.size} samples holds no complete {cycle}-sample cycle")
    blocks = i0[: n * cycle].reshape(n, cycle)
    return np.sqrt(np.mean(blocks**2, axis=1))


def calibrated_threshold(reference: ArrayLike, n_sigma: float = 3.0) -> float:
    """``mean + n_sigma * std`` (population) of an indicator over its quiet reference span."""
    ref = np.asarray(reference, dtype=np.float64)
    if ref.size < 2:
        raise ConfigurationError("calibration needs at least 2 reference values")
    return float(ref.mean() + n_sigma * ref.std())


def null_threshold(null_maxima: ArrayLike, alpha: float = 0.01) -> float:
    """Threshold with false-alarm rate ``alpha`` per record.

    ``null_maxima`` holds, for each change-free record, the largest score seen
    outside its reference span. The threshold is their ``1 - alpha`` quantile,
    so a fresh null record crosses it with probability about ``alpha``.
    """
    if not 0.0 < alpha < 1.0:
        raise ConfigurationError(f"alpha must lie in (0, 1), got {alpha}")
    m = np.asarray(null_maxima, dtype=np.float64)
    if m.size < math.ceil(1.0 / alpha):
        raise ConfigurationError(f"need at least {math.ceil(1.0 / alpha)} null records for alpha={alpha}, got {m.size}")
    if not np.isfinite(m).all():
        raise NumericError("null record maxima contain non-finite values")
    return float(np.quantile(m, 1.0 - alpha))


# --------------------------------------------------------------------------
# serialization


def les_series_to_csv_text(les_s: LESSeries, scores: ArrayLike | None = None) -> str:
    """``window_end_s,tau,score`` rows preceded by ``#`` metadata lines."""
    buf = io.StringIO()
    meta = {
        "phi": les_s.phi,
        "channels": _format_ids(les_s.channels),
        "N": les_s.n_channels,
        "window": les_s.window,
        "stride": les_s.stride,
        "c": repr(les_s.c),
    }
    for key, val in meta.items():
        buf.write(f"# {key}={val}\n")
    buf.write("window_end_s,tau,score,kappa4\n")
    sc = np.full(len(les_s), np.nan) if scores is None else np.asarray(scores, dtype=float)
    k4 = les_s.kappa4 if les_s.kappa4 is not None else np.full(len(les_s), np.nan)
    for t, tau, s, kk in zip(les_s.times, les_s.values, sc, k4):
        buf.write(f"{t:.9f},{float(tau)!r},{_fmt(s)},{_fmt(kk)}\n")
    return buf.getvalue()


def _fmt(v: float) -> str:
    return "" if not math.isfinite(v) else repr(float(v))


def _format_ids(ids: Sequence[int]) -> str:
    ids = list(ids)
    if ids and ids == list(range(ids[0], ids[0] + len(ids))):
        return f"{ids[0]}-{ids[-1]}" if len(ids) > 1 else str(ids[0])
    return ",".join(str(i) for i in ids)


def parse_ids(text: str) -> list[int]:
    """``"1-24"``, ``"1,3,5"`` or a mix like ``"1-3,7"``."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        a, sep, b = part.partition("-")
        try:
            if sep:
                lo, hi = int(a), int(b)
                if hi < lo:
                    raise ValueError
                out.extend(range(lo, hi + 1))
            else:
                out.append(int(a))
        except ValueError:
            raise ConfigurationError(f"bad channel range {part!r}") from None
    if not out:
        raise ConfigurationError("empty channel subset")
    return out


def load_les_csv(path: str | os.PathLike) -> LESSeries:
    meta: dict[str, str] = {}
    times, taus, k4s = [], [], []
    with open(path, newline="") as fh:
        lines = fh.read().splitlines()
    i = 0
    while i < len(lines) and lines[i].startswith("#"):
        key, _, val = lines[i][1:].strip().partition("=")
        meta[key.strip()] = val.strip()
        i += 1
    if i >= len(lines):
        raise ParseError("missing header row", row=i + 1)
    header = [h.strip() for h in lines[i].split(",")]
    for col in ("window_end_s", "tau"):
        if col not in header:
            raise ParseError(f"missing column {col!r}", row=i + 1)
    it, itau = header.index("window_end_s"), header.index("tau")
    ik = header.index("kappa4") if "kappa4" in header else None
    for lineno, rec in enumerate(csv.reader(lines[i + 1 :]), start=i + 2):
        if not rec:
            continue
        if len(rec) != len(header):
            raise ParseError(f"expected {len(header)} fields, found {len(rec)}", row=lineno)
        try:
            times.append(float(rec[it]))
            taus.append(float(rec[itau]))
            k4s.append(float(rec[ik]) if ik is not None and rec[ik] != "" else math.nan)
        except ValueError:
            raise ParseError(f"non-numeric field in {rec!r}", row=lineno) from None
    try:
        channels = tuple(parse_ids(meta["channels"])) if "channels" in meta else ()
        n = int(meta.get("N", len(channels)))
        window = int(meta["window"])
        stride = int(meta.get("stride", 1))
    except (KeyError, ValueError, ConfigurationError) as exc:
        raise ParseError(f"incomplete metadata header: {exc}", row=1) from None
    try:
        return LESSeries(
            np.array(times), np.array(taus), meta.get("phi", "lambda^2"), channels, n, window, stride, np.array(k4s)
        )
    except ConfigurationError as exc:
        raise ParseError(str(exc)) from None


def event_report(result: DetectionResult, cfg: DetectionConfig, les_s: LESSeries, **extra) -> str:
    report = {
        "schema": "spectral-sentinel/events/v1",
        "config": asdict(cfg),
        "phi": les_s.phi,
        "channels": list(les_s.channels),
        "c": les_s.c,
        "references": [list(r) for r in result.references],
        "events": [asdict(e) for e in result.events],
        **extra,
    }
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def write_text(path: str | os.PathLike, text: str) -> None:
    atomic_write_text(path, text)
