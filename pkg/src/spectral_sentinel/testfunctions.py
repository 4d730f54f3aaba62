"""Test functions applied to covariance eigenvalues before summation."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError, DomainError

__all__ = ["TestFunction", "parse_phi"]

_KINDS = ("identity", "power", "log", "chebyshev", "custom")
_CUSTOM_STEP = 1e-5


@dataclass(frozen=True, eq=False)
class TestFunction:
    """A scalar function of an eigenvalue, with its first derivative.

    Build with the class methods rather than the constructor. Chebyshev
    polynomials act on ``lambda`` rescaled from ``support`` to ``[-1, 1]``;
    an unbound Chebyshev function takes its support from the Marchenko-Pastur
    edges once :meth:`bind` is called with an aspect ratio.
    """

    __test__ = False  # not a pytest class

    kind: str
    k: int = 1
    support: tuple[float, float] | None = None
    table: tuple[tuple[float, ...], tuple[float, ...]] | None = None

    def __post_init__(self) -> None:
        if self.kind not in _KINDS:
            raise ConfigurationError(f"unknown test function kind {self.kind!r}")
        if self.kind in ("power", "chebyshev") and self.k < 0:
            raise ConfigurationError("degree must be >= 0")
        if self.kind == "custom":
            if self.table is None:
                raise ConfigurationError("custom test function needs a table")
            x, y = (np.asarray(a, dtype=float) for a in self.table)
            if x.size < 4 or x.shape != y.shape or np.any(np.diff(x) <= 0):
                raise ConfigurationError("custom table needs >= 4 strictly increasing abscissae")
            object.__setattr__(self, "_spline", CubicSpline(x, y))
        if self.support is not None:
            a, b = self.support
            if not b > a:
                raise ConfigurationError("support must satisfy lo < hi")

    # construction helpers

    @classmethod
    def identity(cls) -> "TestFunction":
        return cls("identity")

    @classmethod
    def power(cls, k: int) -> "TestFunction":
        return cls("power", k=int(k))

    @classmethod
    def log(cls) -> "TestFunction":
        return cls("log")

    @classmethod
    def chebyshev(cls, k: int, support: tuple[float, float] | None = None) -> "TestFunction":
        return cls("chebyshev", k=int(k), support=support)

    @classmethod
    def custom(cls, x: Sequence[float], y: Sequence[float]) -> "TestFunction":
        return cls("custom", table=(tuple(map(float, x)), tuple(map(float, y))))

    def bind(self, c: float) -> "TestFunction":
        if self.kind == "chebyshev" and self.support is None:
            from .rmt import mp_support

            return TestFunction("chebyshev", k=self.k, support=mp_support(c))
        return self

    @property
    def name(self) -> str:
        if self.kind == "power":
            return f"lambda^{self.k}"
        if self.kind == "chebyshev":
            return f"chebyshev:{self.k}"
        return self.kind

    @property
    def polynomial_degree(self) -> int | None:
        """Degree when the function is a polynomial in lambda, else ``None``."""
        return {"identity": 1, "power": self.k, "chebyshev": self.k}.get(self.kind)

    # evaluation

    def _scaled(self, lam: NDArray[np.float64]) -> tuple[NDArray[np.float64], float]:
        if self.support is None:
            raise ConfigurationError("chebyshev test function is unbound; call bind(c) first")
        a, b = self.support
        return (2.0 * lam - (a + b)) / (b - a), 2.0 / (b - a)

    def __call__(self, lam: ArrayLike) -> NDArray[np.float64]:
        lam = np.asarray(lam, dtype=np.float64)
        if self.kind == "identity":
            return lam.copy()
        if self.kind == "power":
            return lam**self.k
        if self.kind == "log":
            if np.any(lam <= 0):
                raise DomainError(f"log test function needs positive eigenvalues (min {lam.min():.3g})")
            return np.log(lam)
        if self.kind == "chebyshev":
            x, _ = self._scaled(lam)
            return np.polynomial.chebyshev.chebval(x, [0] * self.k + [1])
        return self._spline(lam)

    def derivative(self, lam: ArrayLike) -> NDArray[np.float64]:
        lam = np.asarray(lam, dtype=np.float64)
        if self.kind == "identity":
            return np.ones_like(lam)
        if self.kind == "power":
            return self.k * lam ** (self.k - 1) if self.k else np.zeros_like(lam)
        if self.kind == "log":
            if np.any(lam <= 0):
                raise DomainError("log test function needs positive eigenvalues")
            return 1.0 / lam
        if self.kind == "chebyshev":
            x, scale = self._scaled(lam)
            coef = np.polynomial.chebyshev.chebder([0] * self.k + [1])
            return scale * np.polynomial.chebyshev.chebval(x, coef)
        h = _CUSTOM_STEP
        return (self._spline(lam + h) - self._spline(lam - h)) / (2 * h)

    def __repr__(self) -> str:
        return f"TestFunction({self.name})"


def parse_phi(text: str) -> TestFunction:
    """Parse ``identity``, ``log``, ``lambda^k``/``power:k`` or ``chebyshev:k``."""
    s = text.strip().lower()
    if s in ("identity", "lambda", "id"):
        return TestFunction.identity()
    if s in ("log", "ln"):
        return TestFunction.log()
    m = re.fullmatch(r"(?:lambda\^|power:|pow:)(\d+)", s)
    if m:
        return TestFunction.power(int(m.group(1)))
    m = re.fullmatch(r"(?:chebyshev|cheb):(\d+)", s)
    if m:
        return TestFunction.chebyshev(int(m.group(1)))
    raise ConfigurationError(f"unrecognised test function {text!r}")
