"""Plug-in variance and normal confidence interval for the estimated value.

With linear-in-``d`` scores ``s_i`` and a fixed rule ``d``, the value
``M = E[s d(X)]`` is estimated by ``mean(s_i d_i)`` and its asymptotic
variance by the sample variance of ``s_i d_i``.  Plugging in a learned
``eta`` is justified asymptotically only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .core import LinearPolicy, ValidationError, decide
from .scores import LINEAR, ScoreVector


@dataclass(frozen=True)
class ValueInference:
    m_hat: float
    sigma2_hat: float
    ci: tuple[float, float]
    alpha: float
    n: int

    @property
    def se(self) -> float:
        return float(np.sqrt(self.sigma2_hat / self.n))

    def to_json(self) -> dict:
        return {"value": self.m_hat, "sigma2": self.sigma2_hat, "ci": list(self.ci), "alpha": self.alpha}


def variance_plugin(scores: ScoreVector, policy: LinearPolicy, design: np.ndarray,
                    alpha: float = 0.05) -> ValueInference:
    """Mean, variance and ``1 - alpha`` interval for ``s_i d(x_i)``.

    Parameters
    ----------
    scores : ScoreVector
        Must have form ``linear_in_d`` (the EIF score or its panel version).
    policy : LinearPolicy
    design : ndarray
        Intercept-augmented covariates, one row per score.
    alpha : float
        In (0, 1]; ``alpha = 1`` gives a zero-width interval.
    """
    if scores.form != LINEAR:
        raise ValidationError(f"variance_plugin needs linear_in_d scores, got {scores.form}")
    if not 0 < alpha <= 1:
        raise ValidationError("alpha must lie in (0, 1]")
    n = len(scores)
    if n < 2:
        raise ValidationError("variance needs n ≥ 2")
    design = np.asarray(design, dtype=float)
    if design.shape[0] != n:
        raise ValidationError("scores and design have different numbers of rows")
    v = scores.values * decide(policy, design)
    m = float(np.mean(v))
    s2 = float(np.var(v, ddof=1))
    half = float(norm.ppf(1 - alpha / 2)) * np.sqrt(s2 / n)
    return ValueInference(m, s2, (m - half, m + half), alpha, n)
