"""Confidence interval for the value of a learned policy.

Run: python demos/06_inference.py
"""
from idid.inference import variance_plugin
from idid.nuisance import crossfit
from idid.policy import ObjectiveSpec, learn_policy
from idid.scores import score_eif_delta, score_w1
from idid.simulation import Scenario, oracle_policy_value, simulate_cross_section

data, _ = simulate_cross_section(Scenario("main", n=5000, seed=6))
pred = crossfit(data, k=4, seed=0).predict(data.covariates)

res = learn_policy(ObjectiveSpec.from_data(score_w1(pred, data), data))
inf = variance_plugin(score_eif_delta(pred, data), res.policy, data.design, alpha=0.05)
truth, _ = oracle_policy_value(res.policy, n=10**6)
print(f"estimated value {inf.m_hat:.3f}, 95% CI [{inf.ci[0]:.3f}, {inf.ci[1]:.3f}]")
print(f"true value of the learned rule {truth:.3f}")
