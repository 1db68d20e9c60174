"""Multiply robust value of a fixed policy under wrong nuisance models.

Run: python demos/07_value_functional.py
"""
import numpy as np

from idid.nuisance import fit_parametric
from idid.scores import fit_value_nuisances, value_mr
from idid.simulation import (
    Scenario, oracle_nu, oracle_predictions, simulate_cross_section, true_optimal_policy,
)

data, _ = simulate_cross_section(Scenario("main", n=50_000, seed=7))
pol = true_optimal_policy()
pred = oracle_predictions(data.covariates)
nu = oracle_nu(data.covariates, pol)

print("all oracle           ", round(value_mr(data, pred, nu, pol), 3))
# shift nu by a pattern that does not cancel in the double difference
print("wrong nu and gamma   ", round(value_mr(data, pred, nu + np.array([[0, 0], [0, 20.0]]), pol), 3))
wrong_pi = np.broadcast_to(np.array([[0.35, 0.15], [0.2, 0.3]]), pred.pi.shape).copy()
print("wrong pi             ", round(value_mr(data, pred.with_(pi=wrong_pi), nu, pol), 3))

# Fully estimated: parametric nuisances and per-cell regressions for nu.
fitted = fit_parametric(data).predict(data.covariates)
print("estimated nuisances  ", round(value_mr(data, fitted, fit_value_nuisances(data, pol), pol), 3))
