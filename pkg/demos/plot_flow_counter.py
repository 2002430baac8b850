"""
Counting the net flow through a point
=====================================

The flow through x is measured with two booths at x - eps and x + eps.
A particle picks up a minus token at the left booth and a plus token at
the right one; only a change of token moves the counter.  Refining eps
until the counter stops changing gives the flow, and it splits into
particles that cross the whole interval plus a bounded residual.
"""

import numpy as np

from brownian_gas import flow, gas, stats
from brownian_gas.analytic import ReservoirParams
from brownian_gas.paths import RngStream, TimeGrid

params = ReservoirParams(2.0, 1.0)
horizon = 5.0
grid = TimeGrid.over(horizon, 1e-5)   # dt <= eps^2/10 at the finest eps
epsilons = (0.04, 0.02, 0.01)

#%%
# One window: the particles that enter (a, 1 - a) during the horizon (and
# during a burn-in before it), each with its absorption endpoint.

sim = gas.simulate_window(RngStream(7, 0), params, 0.2, grid, t_burn=5.0)
print(f"{len(sim)} trajectories, {np.sum(sim.marks == 1)} end at 1, {np.sum(sim.marks == 0)} at 0")

#%%
# The counter at each eps, and the decomposition J = N01 - N10 + R.

for eps in epsilons:
    print(f"eps = {eps}: J(T) = {flow.run_token_counter(sim, 0.5, eps).final}")
dec = flow.flow_decomposition(sim, 0.5, epsilons)
print(dec.to_json())

#%%
# Over many windows J(T)/T has mean (lambda0 - lambda1)/2 and variance
# (lambda0 + lambda1)/2, as for a difference of independent Poisson counts.

finals = []
for r in range(40):
    w = gas.simulate_window(RngStream(7, 1).child(r), params, 0.2, grid, t_burn=5.0)
    finals.append(flow.estimate_flow_limit(w, 0.5, epsilons, strict=False).trace.final)
m, se = stats.mc_mean(finals)
print(f"mean J/T = {m / horizon:.3f} +- {se / horizon:.3f} (limit {(params.lambda0 - params.lambda1) / 2})")
print(f"var J/T  = {np.var(finals, ddof=1) / horizon:.3f} (limit {params.total / 2})")
