"""The shipped three-bus generator/load model oscillates without settling.

The defaults put the load-bus reactive demand close to the voltage-collapse
boundary, where the trajectory wanders aperiodically. The script summarizes
each state over the last 20 s of a 100 s run and feeds the result through the
same windowed statistic used elsewhere.

Run: python3 demos/05_power_system.py   (about 10 s)
"""

from __future__ import annotations

import numpy as np

from spectral_sentinel import SimConfig, TestFunction, WindowSpec, les_series, simulate_power3bus
from spectral_sentinel.dynsim import default_power3bus

params, closures, x0 = default_power3bus()
series = simulate_power3bus(params, closures, None, SimConfig(100.0, 100.0, x0))
tail = series.data[:, -2000:]
for ch, row in zip(series.channels, tail):
    print(f"{ch.name:>10}: min {row.min():+.5f}  max {row.max():+.5f}  spread {np.ptp(row):.2e}")

les_s = les_series(series, WindowSpec(1000, 250), TestFunction.power(2))
print(f"\nstandardized lambda^2 over {len(les_s)} windows of 10 s: "
      f"min {les_s.values.min():.1f}, max {les_s.values.max():.1f}")
