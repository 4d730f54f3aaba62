"""Eigenvalues of a white-noise covariance matrix follow the Marchenko-Pastur law.

Run: python3 demos/01_marchenko_pastur.py
"""

from __future__ import annotations

import numpy as np
from scipy import stats

from spectral_sentinel import covariance, eigenvalues_sym, gen_test_matrix, mp_cdf, mp_density, mp_support

N, T = 200, 800
c = N / T

# M = G G^T / N for a 200 x 800 Gaussian matrix
eigs = eigenvalues_sym(covariance(gen_test_matrix(N, T, seed=0)))
lo, hi = mp_support(c)
print(f"c = {c}, predicted support [{lo:.3f}, {hi:.3f}], observed [{eigs.min():.3f}, {eigs.max():.3f}]")

# a coarse text histogram against the density
edges = np.linspace(lo, hi, 11)
counts, _ = np.histogram(eigs, edges)
for a, b, k in zip(edges[:-1], edges[1:], counts):
    expected = N * (mp_cdf(b, c) - mp_cdf(a, c))
    print(f"[{a:5.2f}, {b:5.2f})  observed {k:3d}  expected {expected:5.1f}  {'#' * int(k)}")

print(f"density at the centre of the bulk: {mp_density(1 + 1 / c, c):.4f}")
print(f"Kolmogorov-Smirnov distance: {stats.kstest(eigs, lambda x: mp_cdf(x, c)).statistic:.4f}")
