"""
Hitting probabilities and the sticky resolvent
==============================================

Closed-form quantities behind the simulations: the probability that a
Brownian motion started at x has hit an endpoint by time t (an eigen
series for moderate t, an image series for small t), the entrance
intensity they produce, and the resolvent of the sticky motion.
"""

import numpy as np

from brownian_gas import analytic
from brownian_gas.analytic import ReservoirParams, StickyParams

params = ReservoirParams(2.0, 1.0)

#%%
# Hitting probabilities and entrance intensity on a small grid.

print(f"{'t':>6} {'x':>5} {'P(hit 0)':>12} {'P(hit 1)':>12} {'entrance':>10}")
for t in (0.01, 0.1, 1.0):
    for x in (0.1, 0.5, 0.9):
        h0 = float(analytic.hitting_prob(0, x, t))
        h1 = float(analytic.hitting_prob(1, x, t))
        e = float(analytic.entrance_intensity(params, x, t))
        print(f"{t:6} {x:5} {h0:12.8f} {h1:12.8f} {e:10.6f}")

#%%
# As t grows the entrance intensity fills up the stationary profile.

xs = np.linspace(0.05, 0.95, 7)
for t in (0.1, 1.0, 10.0):
    gap = np.max(np.abs(analytic.entrance_intensity(params, xs, t) - analytic.bar_lambda(params, xs)))
    print(f"t = {t:5}: max gap to the stationary intensity {gap:.2e}")

#%%
# The sticky resolvent: an absolutely continuous part on (0, 1) plus atoms
# at the endpoints.  Its total mass is 1 / lambda for every stickiness.

for theta in (StickyParams(1.0, 1.0), StickyParams(0.1, 0.5), StickyParams(0.01, 0.01)):
    res = analytic.sticky_resolvent(theta, 2.0, 0.3)
    print(f"theta = ({theta.theta0}, {theta.theta1}): total mass {res.total_mass():.10f}")
