"""Multi-channel sampled time series and its CSV form.

The CSV layout is one header row ``t,<id>:<name>,...`` followed by one row per
sample. Time is written in fixed decimal notation; channel values with 17
significant digits so a write/read cycle is lossless.
"""

from __future__ import annotations

import csv
import io
import math
import os
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from numpy.typing import NDArray

from .errors import ConfigurationError, ParseError

__all__ = [
    "Channel",
    "TimeSeries",
    "atomic_write_text",
    "load_timeseries_csv",
    "write_timeseries_csv",
    "timeseries_to_csv_text",
]

TIME_DECIMALS = 9


@dataclass(frozen=True)
class Channel:
    id: int
    name: str
    unit: str = ""


@dataclass(frozen=True, eq=False)
class TimeSeries:
    """Equal-length channels sampled at a fixed rate starting at ``t0``.

    ``data`` has shape ``(n_channels, n_samples)``; row ``i`` belongs to
    ``channels[i]``.
    """

    t0: float
    sample_rate: float
    channels: tuple[Channel, ...]
    data: NDArray[np.float64] = field(repr=False)

    def __post_init__(self) -> None:
        data = np.asarray(self.data, dtype=np.float64)
        if data.ndim != 2:
            raise ConfigurationError("time-series data must be two-dimensional (channels x samples)")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "channels", tuple(self.channels))
        if not (self.sample_rate > 0 and math.isfinite(self.sample_rate)):
            raise ConfigurationError(f"sample_rate must be positive, got {self.sample_rate}")
        if data.shape[0] != len(self.channels):
            raise ConfigurationError(
                f"{len(self.channels)} channel descriptors for {data.shape[0]} data rows"
            )
        ids = [ch.id for ch in self.channels]
        if len(set(ids)) != len(ids):
            raise ConfigurationError(f"channel ids must be unique, got {ids}")

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def channel_ids(self) -> list[int]:
        return [ch.id for ch in self.channels]

    @property
    def duration(self) -> float:
        return self.n_samples / self.sample_rate

    def times(self) -> NDArray[np.float64]:
        return self.t0 + np.arange(self.n_samples) / self.sample_rate

    def rows(self, ids: Iterable[int]) -> list[int]:
        """Row indices of the given channel ids, in the order given."""
        lookup = {ch.id: i for i, ch in enumerate(self.channels)}
        out = []
        for cid in ids:
            if cid not in lookup:
                raise ConfigurationError(f"channel id {cid} not present (have {sorted(lookup)})")
            out.append(lookup[cid])
        return out

    def select(self, ids: Sequence[int]) -> "TimeSeries":
        idx = self.rows(ids)
        return TimeSeries(self.t0, self.sample_rate, tuple(self.channels[i] for i in idx), self.data[idx].copy())

    def with_data(self, data: NDArray[np.float64]) -> "TimeSeries":
        return TimeSeries(self.t0, self.sample_rate, self.channels, data)

    def equals(self, other: "TimeSeries") -> bool:
        """Bit-for-bit equality of metadata and samples."""
        return (
            self.t0 == other.t0
            and self.sample_rate == other.sample_rate
            and self.channels == other.channels
            and self.data.shape == other.data.shape
            and bool(np.array_equal(self.data, other.data))
        )


def atomic_write_text(path: str | os.PathLike, text: str) -> None:
    """Write ``text`` to a temp file beside ``path`` and rename it into place."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def timeseries_to_csv_text(series: TimeSeries) -> str:
    buf = io.StringIO()
    header = ["t"] + [f"{ch.id}:{ch.name}" for ch in series.channels]
    buf.write(",".join(header) + "\n")
    times = series.times()
    data = series.data
    for j in range(series.n_samples):
        vals = [f"{times[j]:.{TIME_DECIMALS}f}"]
        vals.extend(repr(float(v)) for v in data[:, j])
        buf.write(",".join(vals) + "\n")
    return buf.getvalue()


def write_timeseries_csv(series: TimeSeries, path: str | os.PathLike) -> None:
    atomic_write_text(path, timeseries_to_csv_text(series))


def _parse_header(header: list[str]) -> list[Channel]:
    if not header or header[0].strip() != "t":
        raise ParseError("first column must be 't'", row=1)
    channels = []
    for col in header[1:]:
        cid, sep, name = col.strip().partition(":")
        if not sep:
            raise ParseError(f"column {col!r} is not of the form '<id>:<name>'", row=1)
        try:
            channels.append(Channel(int(cid), name))
        except ValueError:
            raise ParseError(f"channel id in column {col!r} is not an integer", row=1) from None
    if len({c.id for c in channels}) != len(channels):
        raise ParseError("duplicate channel ids in header", row=1)
    return channels


def _infer_rate(times: NDArray[np.float64]) -> float:
    if times.size < 2:
        return 1.0
    rate = (times.size - 1) / (times[-1] - times[0])
    # time column carries TIME_DECIMALS decimals; snap the rate accordingly
    return float(f"{rate:.9g}")


def load_timeseries_csv(path: str | os.PathLike) -> TimeSeries:
    """Read a series written by :func:`write_timeseries_csv`.

    A header-only file yields a zero-length series (sample rate 1.0); window
    sizing downstream rejects it.
    """
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ParseError("empty file: header row is mandatory", row=1) from None
        channels = _parse_header(header)
        ncol = len(channels) + 1
        rows = []
        for lineno, rec in enumerate(reader, start=2):
            if not rec:
                continue
            if len(rec) != ncol:
                raise ParseError(f"expected {ncol} fields, found {len(rec)}", row=lineno)
            try:
                vals = [float(v) for v in rec]
            except ValueError:
                raise ParseError(f"non-numeric field in {rec!r}", row=lineno) from None
            if not all(math.isfinite(v) for v in vals):
                raise ParseError("non-finite value", row=lineno)
            if rows and vals[0] <= rows[-1][0]:
                raise ParseError(f"time column not strictly increasing ({vals[0]} after {rows[-1][0]})", row=lineno)
            rows.append(vals)
    arr = np.array(rows, dtype=np.float64).reshape(len(rows), ncol)
    times = arr[:, 0]
    rate = _infer_rate(times)
    t0 = float(times[0]) if times.size else 0.0
    return TimeSeries(t0, rate, tuple(channels), arr[:, 1:].T.copy())
