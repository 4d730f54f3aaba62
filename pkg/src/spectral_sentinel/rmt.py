"""Spectral statistics of sample covariance matrices.

Conventions: a data matrix is an ``(N, T)`` float array with one channel per
row, and the covariance is ``M = G @ G.T / N``. Under the null of i.i.d.
unit-variance entries with ``c = N/T <= 1`` the eigenvalues of ``M`` follow the
Marchenko-Pastur law on ``[1 + 1/c - 2/sqrt(c), 1 + 1/c + 2/sqrt(c)]``.

Integrals over that law are evaluated in the angle variable
``zeta(theta) = 1 + 1/c + (2/sqrt(c)) sin(theta)``, which removes the
square-root endpoint behaviour of the density and leaves smooth integrands
for Gauss-Legendre quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.typing import ArrayLike, NDArray

from .errors import ConfigurationError, DomainError, NumericError, RegimeError, ZeroVarianceError
from .testfunctions import TestFunction

__all__ = [
    "SpectralNull",
    "MPLaw",
    "as_data_matrix",
    "standardize_rows",
    "covariance",
    "eigenvalues_sym",
    "les",
    "mp_support",
    "mp_density",
    "mp_cdf",
    "les_mean",
    "les_mean_bias",
    "les_variance",
    "kurtosis_excess",
    "gen_test_matrix",
]

LES_MEAN_NODES = 256
LES_VARIANCE_NODES = 64
QUAD_RTOL = 1e-8
_MAX_NODES = 2048
_DIAG_TOL = 1e-10


@dataclass(frozen=True)
class SpectralNull:
    """Aspect ratio ``c = N/T`` and excess kurtosis ``kappa4`` of the entries."""

    c: float
    kappa4: float = 0.0

    def __post_init__(self) -> None:
        _check_ratio(self.c)
        if not self.kappa4 >= -2:
            raise ConfigurationError(f"kappa4 must be >= -2, got {self.kappa4}")

    @classmethod
    def from_shape(cls, n: int, t: int, kappa4: float = 0.0) -> "SpectralNull":
        return cls(n / t, kappa4)


@dataclass(frozen=True)
class MPLaw:
    c: float
    lo: float
    hi: float

    @classmethod
    def from_ratio(cls, c: float) -> "MPLaw":
        lo, hi = mp_support(c)
        return cls(c, lo, hi)

    def pdf(self, lam: ArrayLike) -> NDArray[np.float64]:
        return mp_density(lam, self.c)

    def cdf(self, lam: ArrayLike) -> NDArray[np.float64]:
        return mp_cdf(lam, self.c)


def _check_ratio(c: float) -> None:
    if not (0 < c <= 1):
        raise RegimeError(f"aspect ratio c = N/T must lie in (0, 1], got {c}")


# --------------------------------------------------------------------------
# matrices


def as_data_matrix(m: ArrayLike) -> NDArray[np.float64]:
    """Validate and return ``m`` as a finite 2-D float array."""
    arr = np.asarray(m, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ConfigurationError(f"data matrix must be 2-D with N, T >= 1, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise ConfigurationError("data matrix contains non-finite entries")
    return arr


def standardize_rows(m: ArrayLike) -> NDArray[np.float64]:
    """Shift and scale every row to mean 0 and population standard deviation 1."""
    arr = as_data_matrix(m)
    sd = arr.std(axis=1, ddof=1) if arr.shape[1] > 1 else np.zeros(arr.shape[0])
    bad = ~(sd > 1e-12)
    if bad.any():
        row = int(np.argmax(bad))
        raise ZeroVarianceError(f"channel row {row} has zero variance", channel=row)
    centered = arr - arr.mean(axis=1, keepdims=True)
    return centered / centered.std(axis=1, keepdims=True)


def covariance(m: ArrayLike) -> NDArray[np.float64]:
    """``M = G G^T / N`` for an ``(N, T)`` data matrix ``G``."""
    arr = as_data_matrix(m)
    return arr @ arr.T / arr.shape[0]


def eigenvalues_sym(mat: ArrayLike) -> NDArray[np.float64]:
    """Ascending eigenvalues of a symmetric matrix (symmetrized first)."""
    a = np.asarray(mat, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigurationError(f"expected a square matrix, got shape {a.shape}")
    try:
        return np.linalg.eigvalsh(0.5 * (a + a.T))
    except np.linalg.LinAlgError as exc:
        raise NumericError(f"symmetric eigen-solver did not converge: {exc}") from exc


def les(eigs: ArrayLike, phi: TestFunction) -> float:
    """Linear eigenvalue statistic: the sum of ``phi`` over the eigenvalues."""
    return float(np.sum(phi(np.asarray(eigs, dtype=np.float64))))


# --------------------------------------------------------------------------
# Marchenko-Pastur law


def mp_support(c: float) -> tuple[float, float]:
    _check_ratio(c)
    mid = 1.0 + 1.0 / c
    half = 2.0 / math.sqrt(c)
    return max(mid - half, 0.0), mid + half


def _zeta(theta: NDArray[np.float64], c: float) -> NDArray[np.float64]:
    return 1.0 + 1.0 / c + (2.0 / math.sqrt(c)) * np.sin(theta)


def mp_density(lam: ArrayLike, c: float) -> NDArray[np.float64] | float:
    lo, hi = mp_support(c)
    x = np.asarray(lam, dtype=np.float64)
    inside = (x > lo) & (x < hi)
    out = np.zeros_like(x)
    xi = x[inside]
    out[inside] = np.sqrt((hi - xi) * (xi - lo)) / (2.0 * np.pi * xi)
    return float(out) if out.ndim == 0 else out


@lru_cache(maxsize=None)
def _gauss(n: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    return np.polynomial.legendre.leggauss(n)


def _angle_rule(n: int, a: float = -math.pi / 2, b: float = math.pi / 2):
    x, w = _gauss(n)
    half = 0.5 * (b - a)
    return half * x + 0.5 * (a + b), half * w


def _angle_weight(theta: NDArray[np.float64], c: float) -> NDArray[np.float64]:
    # rho(lambda) d lambda expressed in theta: 2 cos^2(theta) / (pi c zeta(theta))
    # written via (1 - s)(1 + s) so c = 1 stays finite at theta = -pi/2
    s = np.sin(theta)
    z = _zeta(theta, c)
    return 2.0 * (1.0 - s) * (1.0 + s) / (np.pi * c * z)


def mp_cdf(lam: ArrayLike, c: float, nodes: int = 96) -> NDArray[np.float64] | float:
    """Cumulative distribution of the law, integrating the density numerically."""
    lo, hi = mp_support(c)
    x = np.atleast_1d(np.asarray(lam, dtype=np.float64))
    s = np.clip((x - 1.0 - 1.0 / c) * math.sqrt(c) / 2.0, -1.0, 1.0)
    upper = np.arcsin(s)
    g, w = _gauss(nodes)
    a = -math.pi / 2
    half = 0.5 * (upper - a)
    theta = half[:, None] * g[None, :] + (0.5 * (upper + a))[:, None]
    vals = (_angle_weight(theta, c) * w[None, :]).sum(axis=1) * half
    vals = np.where(x <= lo, 0.0, np.where(x >= hi, 1.0, vals))
    return float(vals[0]) if np.ndim(lam) == 0 else vals


def _refine(evaluate, n0: int, what: str) -> float:
    # evaluate(n) -> (value, magnitude); magnitude bounds the summed terms so
    # results that cancel to ~0 are judged against round-off, not against 0
    n = n0
    prev, _ = evaluate(n)
    while n < _MAX_NODES:
        n *= 2
        cur, mag = evaluate(n)
        if abs(cur - prev) <= QUAD_RTOL * max(abs(cur), 1e-10) + 1e3 * np.finfo(float).eps * mag:
            return cur
        prev = cur
    raise NumericError(f"{what} quadrature did not stabilise to {QUAD_RTOL:g} by {_MAX_NODES} nodes")


def _check_phi_regime(phi: TestFunction, c: float) -> None:
    if phi.kind == "log" and c >= 1:
        raise DomainError("log test function needs c < 1 (support bounded away from 0)")


def les_mean(phi: TestFunction, n: int, c: float, *, real_bias: bool = False) -> float:
    """Large-N mean ``N * integral(phi * rho)`` of the statistic.

    With ``real_bias=True`` the O(1) finite-N correction for real Gaussian
    entries (:func:`les_mean_bias`) is added.
    """
    _check_ratio(c)
    _check_phi_regime(phi, c)
    phi = phi.bind(c)

    def evaluate(nodes: int) -> float:
        theta, w = _angle_rule(nodes)
        terms = w * phi(_zeta(theta, c)) * _angle_weight(theta, c)
        return float(np.sum(terms)), float(np.sum(np.abs(terms)))

    mean = n * _refine(evaluate, LES_MEAN_NODES, "mean")
    if real_bias:
        mean += les_mean_bias(phi, c)
    return mean


def les_mean_bias(phi: TestFunction, c: float) -> float:
    """O(1) mean correction for real Gaussian entries.

    ``(phi(lo) + phi(hi))/4 - (1/2pi) * integral phi(zeta(theta)) d theta``; it
    vanishes for ``phi = identity`` and equals ``1/c`` for ``phi = lambda^2``.
    """
    _check_ratio(c)
    _check_phi_regime(phi, c)
    phi = phi.bind(c)
    lo, hi = mp_support(c)

    def evaluate(nodes: int) -> float:
        theta, w = _angle_rule(nodes)
        terms = w * phi(_zeta(theta, c))
        return float(np.sum(terms)), float(np.sum(np.abs(terms)))

    integral = _refine(evaluate, LES_MEAN_NODES, "bias")
    return float(0.25 * (phi(lo) + phi(hi)) - integral / (2.0 * np.pi))


def les_variance(phi: TestFunction, null: SpectralNull) -> float:
    """Limiting variance of the statistic under the null.

    Double integral of the squared divided difference ``psi`` of
    ``phi(zeta(.))`` against ``1 - sin t1 sin t2``, scaled by ``2/(c pi^2)``, plus
    the fourth-cumulant term ``kappa4/pi^2 * (integral phi(zeta) sin)^2``.
    """
    c, k4 = null.c, null.kappa4
    _check_phi_regime(phi, c)
    phi = phi.bind(c)

    def evaluate(nodes: int) -> float:
        theta, w = _angle_rule(nodes)
        z = _zeta(theta, c)
        f = phi(z)
        s = np.sin(theta)
        dz = z[:, None] - z[None, :]
        df = f[:, None] - f[None, :]
        diag = np.abs(dz) < _DIAG_TOL
        psi = np.where(diag, 0.0, df / np.where(diag, 1.0, dz))
        if diag.any():
            fp = phi.derivative(z)
            psi = np.where(diag, 0.5 * (fp[:, None] + fp[None, :]), psi)
        kernel = psi**2 * (1.0 - s[:, None] * s[None, :])
        first = 2.0 / (c * np.pi**2) * float(w @ kernel @ w)
        second = k4 / np.pi**2 * float(np.sum(w * f * s)) ** 2
        return first + second, abs(first) + abs(second)

    var = _refine(evaluate, LES_VARIANCE_NODES, "variance")
    if var < -1e-10:
        raise NumericError(f"variance quadrature returned negative value {var:.3g}")
    return max(var, 0.0)


# --------------------------------------------------------------------------
# entry statistics and generators


def kurtosis_excess(samples: ArrayLike) -> float:
    """``m4 / m2^2 - 3`` from population central moments."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size < 4:
        raise ConfigurationError("kurtosis needs at least 4 samples")
    d = x - x.mean()
    m2 = float(np.mean(d * d))
    if not m2 > 0:
        raise ZeroVarianceError("samples have zero variance")
    d2 = d * d
    return float(np.mean(d2 * d2)) / m2**2 - 3.0


_DISTS = ("gaussian", "rademacher", "uniform")


def gen_test_matrix(n: int, t: int, dist: str = "gaussian", seed: int = 0) -> NDArray[np.float64]:
    """I.i.d. zero-mean, unit-variance ``(n, t)`` matrix, deterministic per seed."""
    if n < 1 or t < 1:
        raise ConfigurationError("N and T must be >= 1")
    rng = np.random.default_rng(seed)
    if dist == "gaussian":
        return rng.standard_normal((n, t))
    if dist == "rademacher":
        return rng.integers(0, 2, size=(n, t)).astype(np.float64) * 2.0 - 1.0
    if dist == "uniform":
        r = math.sqrt(3.0)
        return rng.uniform(-r, r, size=(n, t))
    raise ConfigurationError(f"unknown distribution {dist!r}; choose from {_DISTS}")
