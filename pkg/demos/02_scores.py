"""Fit nuisances and compare the per-unit scores behind each estimator.

Run: python demos/02_scores.py
"""
import numpy as np

from idid.core import decide
from idid.nuisance import crossfit, fit_parametric
from idid.scores import build_scores, score_eif_delta
from idid.simulation import Scenario, simulate_cross_section, true_optimal_policy

data, _ = simulate_cross_section(Scenario("main", n=5000, seed=2))

nuis = fit_parametric(data)
pred = nuis.predict(data.covariates)
print("trim events:", pred.trim_counts())
print("mean fitted pi per cell:\n", pred.pi.mean(axis=0).round(3))

# Every estimator reduces to a score vector plus an objective form.
for tag in ("wald", "ipw1", "ipw2", "mr1", "mr2", "iv_t0", "iv_t1"):
    s = build_scores(tag, pred, data)
    print(f"  {tag:6s} form={s.form:17s} mean={s.values.mean():9.3f}")

# W1 and W2 are sign flips of the EIF score Delta, bit for bit.
delta = score_eif_delta(pred, data).values
w1 = build_scores("mr1", pred, data).values
print("W1 == (2A-1) Delta:", np.array_equal(w1, (2 * data.a - 1) * delta))

# Cross-fitted version: each unit's nuisances come from the other folds.
cf = crossfit(data, k=4, seed=0).predict(data.covariates)
d = decide(true_optimal_policy(), data.design)
print("value of d_opt, in-sample vs cross-fitted:",
      round(float(np.mean(delta * d)), 3),
      round(float(np.mean(score_eif_delta(cf, data).values * d)), 3))
