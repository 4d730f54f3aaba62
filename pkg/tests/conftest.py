from __future__ import annotations

import numpy as np
import pytest

from spectral_sentinel.cases import run_fault_case, run_lorenz_case
from spectral_sentinel.rmt import gen_test_matrix


@pytest.fixture(scope="session")
def lorenz_report(tmp_path_factory):
    """One end-to-end Lorenz change-point run shared across modules."""
    return run_lorenz_case(tmp_path_factory.mktemp("lorenz"), seed=0)


@pytest.fixture(scope="session")
def fault_report(tmp_path_factory):
    return run_fault_case(tmp_path_factory.mktemp("fault"), seed=0)


@pytest.fixture(scope="session")
def square_tau_samples():
    """tau = Tr(M^2) for 2000 Gaussian 100x400 matrices (M = G G^T / N)."""
    n, t, trials = 100, 400, 2000
    out = np.empty(trials)
    for i in range(trials):
        g = gen_test_matrix(n, t, "gaussian", seed=10_000 + i)
        m = g @ g.T / n
        out[i] = np.sum(m * m)
    return out
