"""Per-unit scores and weights.

Every function returns a :class:`ScoreVector` whose ``form`` tells the policy
search how to turn it into an objective:

``linear_in_d``       mean of ``s_i * d(x_i)``
``match_treatment``   mean of ``s_i * 1{a_i = d(x_i)}``
``match_instrument``  mean of ``s_i * 1{z_i = d(x_i)}``
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .core import Dataset, LinearPolicy, PanelDataset, decide
from .nuisance import (
    CELLS,
    BaggedTreesBackend,
    EmptyCellError,
    NuisancePredictions,
    PanelPredictions,
    ParametricBackend,
    make_backend,
)

LINEAR = "linear_in_d"
MATCH_TREATMENT = "match_treatment"
MATCH_INSTRUMENT = "match_instrument"
FORMS = (LINEAR, MATCH_TREATMENT, MATCH_INSTRUMENT)


@dataclass(frozen=True)
class ScoreVector:
    values: np.ndarray
    form: str
    estimator_tag: str
    trim_counts: Mapping[str, int] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.form not in FORMS:
            raise ValueError(f"unknown objective form {self.form!r}")
        values = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(values)):
            raise ValueError(f"{self.estimator_tag}: non-finite score values")
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return self.values.size


def _signs(data: Dataset):
    return 2 * data.a - 1, 2 * data.t - 1, 2 * data.z - 1


def _augmentation(pred: NuisancePredictions, data: Dataset):
    """``1 / (pi(T,Z,X) delta_a(X))`` and the bracketed residual of the EIF."""
    mu_a, mu_y, pi = pred.at(data.t, data.z)
    ratio = pred.ratio
    resid = data.y - mu_y - ratio * (data.a - mu_a)
    return 1.0 / (pi * pred.delta_a), resid, ratio


def score_wald(pred: NuisancePredictions) -> ScoreVector:
    """``delta_y(x) / delta_a(x)`` (the conditional effect), floored denominator."""
    return ScoreVector(pred.ratio, LINEAR, "wald", pred.trim_counts())


def weight_ipw1(pred: NuisancePredictions, data: Dataset) -> ScoreVector:
    sa, st, sz = _signs(data)
    _, _, pi = pred.at(data.t, data.z)
    w = sz * st * sa * data.y / (pi * pred.delta_a)
    return ScoreVector(w, MATCH_TREATMENT, "ipw1", pred.trim_counts())


def weight_ipw2(pred: NuisancePredictions, data: Dataset) -> ScoreVector:
    _, st, _ = _signs(data)
    _, _, pi = pred.at(data.t, data.z)
    w = st * data.y / (pi * pred.delta_a)
    return ScoreVector(w, MATCH_INSTRUMENT, "ipw2", pred.trim_counts())


def score_eif_delta(pred: NuisancePredictions, data: Dataset) -> ScoreVector:
    """Uncentered efficient influence function of the conditional effect."""
    _, st, sz = _signs(data)
    inv, resid, ratio = _augmentation(pred, data)
    delta = ratio + (sz * st) * inv * resid
    return ScoreVector(delta, LINEAR, "mr", pred.trim_counts())


def score_w1(pred: NuisancePredictions, data: Dataset) -> ScoreVector:
    sa, st, sz = _signs(data)
    inv, resid, ratio = _augmentation(pred, data)
    w1 = sa * ratio + (sa * sz * st) * inv * resid
    return ScoreVector(w1, MATCH_TREATMENT, "mr1", pred.trim_counts())


def score_w2(pred: NuisancePredictions, data: Dataset) -> ScoreVector:
    _, st, sz = _signs(data)
    inv, resid, ratio = _augmentation(pred, data)
    w2 = sz * ratio + st * inv * resid
    return ScoreVector(w2, MATCH_INSTRUMENT, "mr2", pred.trim_counts())


def score_iv_single(pred: NuisancePredictions, data: Dataset, period: int) -> ScoreVector:
    """Single-period instrumental-variable weight ``z a y / (delta_t pi_t(z))``.

    Units outside ``period`` get 0, and values are rescaled by ``n / n_t`` so
    the usual mean over all ``n`` units equals the average over the period
    subsample.
    """
    in_period = data.t == period
    n_t = int(np.count_nonzero(in_period))
    if n_t == 0:
        raise EmptyCellError(f"no units observed in period {period}")
    d_t = pred.period_delta(period)
    pi_t = pred.period_pi(period)[np.arange(data.n), data.z.astype(int)]
    w = np.where(in_period, data.z * data.a * data.y / (d_t * pi_t), 0.0) * (data.n / n_t)
    return ScoreVector(w, MATCH_TREATMENT, f"iv_t{period}", pred.trim_counts())


# --------------------------------------------------------------------------
# panel


def score_panel_wald(pp: PanelPredictions) -> ScoreVector:
    return ScoreVector(pp.dy_contrast / pp.da_contrast, LINEAR, "panel_wald", pp.trim_counts())


def score_panel_eif(pp: PanelPredictions, data: PanelDataset) -> ScoreVector:
    da = pp.da_contrast
    dy = pp.dy_contrast
    pz = pp.pi_trimmed
    bracket = (
        (data.y1 - data.y0) * da
        - (data.a1 - data.a0) * dy
        + pp.dy[:, 1] * pp.da[:, 0]
        - pp.dy[:, 0] * pp.da[:, 1]
    )
    values = dy / da - (data.z - pz) / (pz * (1 - pz) * da**2) * bracket
    return ScoreVector(values, LINEAR, "panel_eif", pp.trim_counts())


# --------------------------------------------------------------------------
# value functional of a fixed policy


def value_target(data: Dataset, policy: LinearPolicy) -> np.ndarray:
    """``(2A - 1) Y 1{A = d(X)}``."""
    d = decide(policy, data.design)
    return (2 * data.a - 1) * data.y * (data.a == d)


@dataclass(frozen=True)
class ValueNuisances:
    """Per-cell regressions of :func:`value_target` for one fixed policy."""

    nu: Mapping[tuple[int, int], object]
    policy: LinearPolicy

    def predict_nu(self, x: np.ndarray) -> np.ndarray:
        x = np.atleast_2d(x)
        out = np.empty((x.shape[0], 2, 2))
        for t, z in CELLS:
            out[:, t, z] = self.nu[(t, z)].predict(x)
        return out

    def gamma(self, x: np.ndarray, delta_a: np.ndarray) -> np.ndarray:
        return gamma_from_nu(self.predict_nu(x), delta_a)


def gamma_from_nu(nu: np.ndarray, delta_a: np.ndarray) -> np.ndarray:
    """``sum_{t,z} (2z-1)(2t-1) nu(t,z,x) / delta_a(x)``."""
    s = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return np.einsum("itz,tz->i", nu, s) / delta_a


def fit_value_nuisances(data: Dataset, policy: LinearPolicy, fitter="parametric",
                        config: Mapping | None = None) -> ValueNuisances:
    backend = ParametricBackend() if fitter == "parametric" else make_backend(fitter, config)
    target = value_target(data, policy)
    x = data.covariates
    nu = {}
    for t, z in CELLS:
        idx = np.flatnonzero((data.t == t) & (data.z == z))
        if idx.size == 0:
            raise EmptyCellError(f"cell (t={t}, z={z}) is empty")
        if isinstance(backend, BaggedTreesBackend):
            backend._check(idx.size)
        nu[(t, z)] = backend.regression(x[idx], target[idx])
    return ValueNuisances(nu, policy)


def value_mr_terms(data: Dataset, pred: NuisancePredictions, nu, policy: LinearPolicy,
                   gamma: np.ndarray | None = None) -> np.ndarray:
    """Per-unit terms whose mean is the multiply robust value estimate.

    ``nu`` is a :class:`ValueNuisances` or an array ``[i, t, z]`` of
    predictions.  ``gamma`` defaults to :func:`gamma_from_nu` with the
    floored ``delta_a`` of ``pred``.
    """
    nu_arr = nu.predict_nu(data.covariates) if isinstance(nu, ValueNuisances) else np.asarray(nu)
    delta_a = pred.delta_a
    if gamma is None:
        gamma = gamma_from_nu(nu_arr, delta_a)
    i = np.arange(data.n)
    t, z = data.t.astype(int), data.z.astype(int)
    mu_a, _, pi = pred.at(t, z)
    s = (2 * z - 1) * (2 * t - 1)
    denom = pi * delta_a
    w = value_target(data, policy)
    return (
        s * w / denom
        - s * nu_arr[i, t, z] / denom
        + gamma
        - s * (data.a - mu_a) * gamma / denom
    )


def value_mr(data: Dataset, pred: NuisancePredictions, nu, policy: LinearPolicy,
             gamma: np.ndarray | None = None) -> float:
    return float(np.mean(value_mr_terms(data, pred, nu, policy, gamma)))


def value_eif(data: Dataset, pred: NuisancePredictions, nu, policy: LinearPolicy,
              gamma: np.ndarray | None = None) -> tuple[float, np.ndarray]:
    """Estimate and its influence values, centred at the in-sample estimate."""
    terms = value_mr_terms(data, pred, nu, policy, gamma)
    psi = float(np.mean(terms))
    return psi, terms - psi


# --------------------------------------------------------------------------
# dispatch

ESTIMATORS = ("wald", "ipw1", "ipw2", "mr1", "mr2", "iv_t0", "iv_t1")
PANEL_ESTIMATORS = ("panel_wald", "panel_eif")


def build_scores(estimator: str, pred, data) -> ScoreVector:
    """Score vector for an estimator tag (``wald``, ``ipw1``, ..., ``panel_eif``)."""
    if estimator == "wald":
        return score_wald(pred)
    if estimator == "ipw1":
        return weight_ipw1(pred, data)
    if estimator == "ipw2":
        return weight_ipw2(pred, data)
    if estimator == "mr1":
        return score_w1(pred, data)
    if estimator == "mr2":
        return score_w2(pred, data)
    if estimator in ("mr", "eif"):
        return score_eif_delta(pred, data)
    if estimator in ("iv_t0", "iv_t1"):
        return score_iv_single(pred, data, int(estimator[-1]))
    if estimator == "panel_wald":
        return score_panel_wald(pred)
    if estimator == "panel_eif":
        return score_panel_eif(pred, data)
    raise KeyError(f"unknown estimator {estimator!r}")
