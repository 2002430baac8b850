"""
From sticky particles to the gas
================================

Put n particles in [0, 1], most of them parked at the endpoints, and let
each move as a Brownian motion that is sticky at 0 and 1 with stickiness
lambda/n.  Parked particles are invisible; the ones that leave an end
become the newcomers of the gas.  As n grows the interior configuration
converges to the gas started from the same interior particles.
"""

import numpy as np
from scipy import stats as st

from brownian_gas import analytic
from brownian_gas.analytic import ReservoirParams
from brownian_gas.configuration import Configuration
from brownian_gas.paths import RngStream
from brownian_gas.sticky_limit import build_initial_array, simulate_replicas

params = ReservoirParams(1.0, 1.0)
t = 0.5
target = analytic.total_entrance_mass(params, t)

#%%
# Starting from an empty interior, the count at time t should approach a
# Poisson law with mean equal to the total entrance mass.

for n in (4, 16, 64, 256):
    arr = build_initial_array(Configuration.empty(), n)
    rc = simulate_replicas(RngStream(11, 0).child(n), params, arr, t, 4000)
    k = np.arange(rc.totals.max() + 1)
    emp = np.bincount(rc.totals, minlength=k.size) / rc.totals.size
    tv = 0.5 * (np.abs(emp - st.poisson.pmf(k, target)).sum() + st.poisson.sf(k[-1], target))
    print(f"n = {n:4d}: mean {rc.totals.mean():.3f} (limit {target:.3f}), TV to Poisson {tv:.3f}")

#%%
# The parked particles stay split evenly between the two ends.

arr = build_initial_array(Configuration([0.3, 0.7]), 400)
rc = simulate_replicas(RngStream(11, 1), params, arr, t, 200)
print("fraction of parked particles at 0:", round(float(np.mean(rc.at_zero / (400 - rc.totals))), 3))
