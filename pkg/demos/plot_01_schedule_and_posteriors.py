"""
Schedules and closed-form posteriors
====================================

Build the symmetric diffusion-rate profile, look at the accumulated variances
on a quadratic grid, and check that one generalized step composes the bridge
marginals exactly for any admissible ``g``.
"""

import numpy as np

from i3sb.posterior import GnPolicy, g_bound, gn_value, i2sb_g, pg_coeffs, q_weights, ddpm_weights
from i3sb.schedule import make_schedule, total_variance

# 20 generative steps, triangular beta peaking at 0.15 in the middle
s = make_schedule(20)
print("t grid     :", np.round(s.t[:6], 5), "...")
print("sigma2     :", np.round(s.sigma2[:6], 6), "...")
print("total var  :", total_variance(s))

# sigma2 grows from the clean end, sbar2 from the corrupted end; they always add up
print("max |sigma2 + sbar2 - total| =", np.max(np.abs(s.sigma2 + s.sbar2 - total_variance(s))))

# step n = 7 with three choices of g: deterministic, DDPM-equivalent, largest allowed
n = 7
for name, g in [("g = 0", 0.0), ("DDPM g", i2sb_g(s, n)), ("max g", g_bound(s, n))]:
    co = pg_coeffs(s, n, g)
    print(f"{name:7s}  A={co.a:.5f}  B={co.b:.5f}  C={co.c:.5f}  A+B+C={co.a + co.b + co.c:.12f}")

# the DDPM-equivalent g puts zero weight on X_N and reproduces the DDPM weights
co = pg_coeffs(s, n, i2sb_g(s, n))
print("DDPM weights", np.round(ddpm_weights(s, n)[:2], 10), " generalized", np.round([co.a, co.b], 10))

# composition: pushing the marginal at n+1 through the step gives the marginal at n
x0, xN = -0.5, 0.8
rng = np.random.default_rng(0)
for g in rng.uniform(0, g_bound(s, n), 3):
    co = pg_coeffs(s, n, g)
    w0, w1, v1 = q_weights(s, n + 1)
    mean = co.a * x0 + co.b * (w0 * x0 + w1 * xN) + co.c * xN
    var = co.b**2 * v1 + co.g2
    w0n, w1n, vn = q_weights(s, n)
    print(f"g={g:.4f}  mean error {mean - (w0n * x0 + w1n * xN):+.1e}  variance error {var - vn:+.1e}")

# the step-function policy switches noise off for n/N <= r
pol = GnPolicy("step_function", r=0.2)
print("g_n, r=0.2:", np.round([gn_value(s, k, pol) for k in range(1, 20)], 4))
