"""Panel data: both periods observed for every unit.

Run: python demos/05_panel.py
"""
import numpy as np

from idid.nuisance import fit_panel
from idid.policy import ObjectiveSpec, learn_policy
from idid.scores import build_scores
from idid.simulation import Scenario, oracle_panel_predictions, pcd, simulate_panel, test_covariates

data, _ = simulate_panel(Scenario("main", n=5000, seed=5, panel=True))

# With oracle nuisances the panel EIF score averages to E[tau(X)] = -5.
v = build_scores("panel_eif", oracle_panel_predictions(data.covariates), data).values
print(f"E_n[Delta_panel] = {v.mean():.2f} +/- {2 * v.std() / np.sqrt(v.size):.2f}")

pred = fit_panel(data).predict(data.covariates)
test_x = test_covariates(50_000, seed=1)
for tag in ("panel_wald", "panel_eif"):
    res = learn_policy(ObjectiveSpec.from_data(build_scores(tag, pred, data), data))
    print(f"{tag:10s} eta={np.round(res.policy.eta, 3)} PCD {pcd(res.policy, test_x):.3f}")
