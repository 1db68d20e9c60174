"""Simulate the instrumented DiD design and look at what the instrument does.

Run: python demos/01_simulate.py
"""
import numpy as np

from idid.simulation import Scenario, oracle_mu_a, simulate_cross_section, true_cate

data, truth = simulate_cross_section(Scenario("main", n=20_000, seed=1))
print(f"{data.n} units, covariates {data.covariate_names}")

# Treatment uptake by period and instrument arm.  The instrument pushes
# uptake down in period 0 and up in period 1.
for t in (0, 1):
    for z in (0, 1):
        cell = (data.t == t) & (data.z == z)
        print(f"  P(A=1 | T={t}, Z={z}) = {data.a[cell].mean():.3f}")

# The same probabilities at x = (0, 0), with the confounder integrated out.
print("oracle mu_A at x=(0,0):\n", np.round(oracle_mu_a(np.zeros((1, 2)))[0], 3))

# The effect is heterogeneous: treat when 3 x1 + 4 x2 > 1.
print("tau at (1,1) and (0,0):", true_cate(np.array([[1.0, 1.0], [0.0, 0.0]])))
print("share who benefit:", np.mean(true_cate(data.covariates) > 0).round(3))
