"""
The stationary gas between two reservoirs
=========================================

Particles enter (0, 1) from reservoirs at both ends and are removed when
they reach either end.  In equilibrium the positions form a Poisson
process whose intensity interpolates linearly between the two reservoir
rates.  This script draws from that law, runs the dynamics forward and
checks that nothing moves.
"""

import numpy as np

from brownian_gas import analytic, gas, stats
from brownian_gas.analytic import ReservoirParams
from brownian_gas.configuration import bin_count_matrix
from brownian_gas.paths import RngStream

params = ReservoirParams(2.0, 1.0)
edges = np.array([0.0, 0.25, 0.5, 0.75, 1.0])

#%%
# Expected counts per bin are integrals of the linear intensity.

prim = params.lambda0 * (edges - edges ** 2 / 2) + params.lambda1 * edges ** 2 / 2
expected = np.diff(prim)
print("intensity at 0, 1/2, 1:", [float(analytic.bar_lambda(params, x)) for x in (1e-9, 0.5, 1 - 1e-9)])
print("expected bin counts:", np.round(expected, 4))

#%%
# Draw equilibrium configurations and compare the empirical bin means.

stream = RngStream(2024, 0)
omegas = gas.sample_stationary_batch(stream.child(0), params, 5000)
print("empirical bin means:", np.round(bin_count_matrix(omegas, edges).mean(axis=0), 4))

#%%
# Run the dynamics for t = 0.5 twice.  Survivors move as absorbed Brownian
# motions, newcomers are a Poisson process with the entrance intensity.

for k in (1, 2):
    omegas = gas.sample_transition_batch(stream.child(k), params, omegas, 0.5, 1e-3)
    counts = bin_count_matrix(omegas, edges)
    p_values = [stats.poisson_gof(counts[:, b], expected[b]).p_value for b in range(4)]
    print(f"after {k} step(s): bin means {np.round(counts.mean(axis=0), 4)}, "
          f"Poisson p-values {np.round(p_values, 3)}")

#%%
# From an empty start the count is Poisson with the total entrance mass,
# which grows like the square root of time at first.

for t in (0.01, 0.1, 1.0, 10.0):
    print(f"t = {t:5}: mean count {analytic.total_entrance_mass(params, t):.4f}")
