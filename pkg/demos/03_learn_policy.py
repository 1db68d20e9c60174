"""Learn a linear policy with the multiply robust score and check it.

Run: python demos/03_learn_policy.py
"""
import numpy as np

from idid.nuisance import fit_parametric
from idid.policy import ObjectiveSpec, grid_oracle, learn_policy
from idid.scores import build_scores
from idid.simulation import OPTIMAL_ETA, Scenario, pcd, simulate_cross_section, test_covariates

data, _ = simulate_cross_section(Scenario("main", n=5000, seed=3))
pred = fit_parametric(data).predict(data.covariates)
test_x = test_covariates(100_000, seed=0)

for tag in ("mr1", "wald", "iv_t0"):
    spec = ObjectiveSpec.from_data(build_scores(tag, pred, data), data)
    res = learn_policy(spec)
    angle = np.degrees(np.arccos(np.clip(res.policy.eta @ OPTIMAL_ETA, -1, 1)))
    print(f"{tag:6s} eta={np.round(res.policy.eta, 3)}  angle to optimum {angle:5.1f} deg  "
          f"PCD {pcd(res.policy, test_x):.3f}  ({res.evaluations} evaluations)")

# The search is checked against brute force on a 1-degree sphere grid.
spec = ObjectiveSpec.from_data(build_scores("mr1", pred, data), data)
print("search vs grid:", round(learn_policy(spec).objective, 4), round(grid_oracle(spec).objective, 4))
