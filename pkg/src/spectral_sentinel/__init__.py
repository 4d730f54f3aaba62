"""Random-matrix situation awareness for multichannel grid and chaotic-system data.

The pipeline simulates or loads a multichannel time series, turns each
sliding window into a linear eigenvalue statistic of its sample covariance
matrix, and flags windows whose statistic departs from a reference or from
the Marchenko-Pastur null.
"""

from __future__ import annotations

from .detector import (
    DetectionConfig,
    DetectionEvent,
    DetectionResult,
    LESSeries,
    WindowSpec,
    calibrated_threshold,
    null_threshold,
    detect,
    detect_changepoints,
    les_series,
    null_scores,
    reference_score,
    zero_sequence_indicator,
    zscore_null,
)
from .dynsim import (
    FaultSpec,
    LorenzParams,
    ParameterSchedule,
    Power3BusParams,
    SimConfig,
    ThreeBusNetwork,
    add_noise,
    inject_fault,
    rk4_step,
    simulate_lorenz,
    simulate_power3bus,
)
from .errors import SentinelError
from .rmt import (
    MPLaw,
    SpectralNull,
    covariance,
    eigenvalues_sym,
    gen_test_matrix,
    kurtosis_excess,
    les,
    les_mean,
    les_variance,
    mp_cdf,
    mp_density,
    mp_support,
    standardize_rows,
)
from .series import Channel, TimeSeries, load_timeseries_csv, write_timeseries_csv
from .testfunctions import TestFunction, parse_phi

__version__ = "0.1.0"
