"""Simulated instrumented DiD data, oracle nuisances and the Monte Carlo benchmark.

Structural model (per period ``t``)::

    X1, X2 ~ N(0, 1);  T, Z ~ Bernoulli(0.5);  U0, U1 ~ bridge(0.5)
    P(A_t = 1 | Z, U, X) = expit(c0 + cz Z + cu U_t + cx X_j)
    Y_t ~ N(mu_t, 1)
    mu_0 = 200 + 10 (A_0 (1.5 X1 + 2 X2 - 0.5) + 0.5 U_0 + 2 Z + 1.5 X1 + 2 X2)
    mu_1 = 240 + 10 (A_1 (1.5 X1 + 2 X2 - 0.5) + 0.5 U_1 + 2 Z + 2 X1 + 1.5 X2)

so the conditional effect is ``10 (1.5 x1 + 2 x2 - 0.5)`` and the optimal
rule treats when ``3 x1 + 4 x2 - 1 > 0``.  The panel generator uses the same
equations and observes both periods for every unit.
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.special import expit, roots_legendre

from .core import Dataset, LinearPolicy, PanelDataset, augment_matrix, decide
from .nuisance import (
    NuisanceError,
    NuisancePredictions,
    PanelPredictions,
    crossfit,
    fit_parametric,
)
from .policy import ObjectiveSpec, SearchConfig, learn_policy
from .scores import ESTIMATORS, build_scores, gamma_from_nu

# (intercept, instrument, confounder, covariate slope, covariate index)
_TREATMENT = {
    "main": ((2.0, -7.0, 0.2, 2.0, 0), (-1.5, 5.0, -0.15, 1.5, 1)),
    "weak_iv": ((1.5, -3.0, 0.2, 2.0, 0), (-1.5, 2.0, -0.15, 1.5, 1)),
    "strong_iv": ((3.0, -7.0, 0.2, 2.0, 0), (-3.0, 5.0, -0.15, 1.5, 1)),
}
SCENARIOS = tuple(_TREATMENT)
_BASE = (200.0, 240.0)
_LINEAR = ((1.5, 2.0), (2.0, 1.5))
OPTIMAL_ETA = np.array([-1.0, 3.0, 4.0]) / np.sqrt(26.0)


@dataclass(frozen=True)
class Scenario:
    name: str = "main"
    n: int = 5000
    seed: int = 0
    panel: bool = False

    def __post_init__(self):
        if self.name not in _TREATMENT:
            raise ValueError(f"unknown scenario {self.name!r}; valid: {', '.join(SCENARIOS)}")
        if self.n < 1:
            raise ValueError("n ≥ 1 required")


@dataclass(frozen=True)
class Truth:
    """Latent quantities kept alongside simulated data for oracle checks."""

    x: np.ndarray
    u0: np.ndarray
    u1: np.ndarray
    a0: np.ndarray
    a1: np.ndarray
    scenario: str = "main"

    @property
    def d_opt(self) -> np.ndarray:
        return true_optimal_policy().decide(augment_matrix(self.x))


# --------------------------------------------------------------------------
# bridge distribution


def bridge_cdf(u):
    """CDF of ``p(u) = 1 / (2 pi cosh(u / 2))``."""
    return 2.0 / np.pi * np.arctan(np.exp(np.asarray(u, dtype=float) / 2.0))


def bridge_density(u):
    # 1 / (2 pi cosh(u/2)) rewritten so large |u| underflows instead of overflowing
    e = np.exp(-np.abs(np.asarray(u, dtype=float)))
    return np.sqrt(e) / (np.pi * (1.0 + e))


def bridge_quantile(v):
    return 2.0 * np.log(np.tan(np.pi * np.asarray(v, dtype=float) / 2.0))


def sample_bridge(rng: np.random.Generator, size=None):
    """Draw from the bridge distribution with parameter 0.5 (inverse CDF)."""
    return bridge_quantile(rng.random(size))


_GL_NODES, _GL_WEIGHTS = roots_legendre(400)
_QUAD_U = 50.0 * _GL_NODES
_QUAD_W = 50.0 * _GL_WEIGHTS * bridge_density(_QUAD_U)


def bridge_expectation(fn) -> np.ndarray:
    """``E[fn(U)]`` for ``U ~ bridge(0.5)`` by Gauss-Legendre on [-50, 50].

    ``fn`` receives the node vector with shape (1, m) and may broadcast
    against leading dimensions.
    """
    return fn(_QUAD_U[None, :]) @ _QUAD_W


# --------------------------------------------------------------------------
# structural equations


def treatment_logit(scenario: str, t: int, z, u, x):
    """Log-odds of ``A_t = 1`` given ``(Z, U_t, X)`` under ``scenario``."""
    c0, cz, cu, cx, j = _TREATMENT[scenario][t]
    return c0 + cz * z + cu * u + cx * x[..., j]


def cate_component(x: np.ndarray) -> np.ndarray:
    x = np.atleast_2d(x)
    return 1.5 * x[:, 0] + 2.0 * x[:, 1] - 0.5


def true_cate(x) -> np.ndarray | float:
    """``10 (1.5 x1 + 2 x2 - 0.5)``."""
    x = np.asarray(x, dtype=float)
    out = 10.0 * cate_component(x)
    return float(out[0]) if x.ndim == 1 else out


def true_optimal_policy() -> LinearPolicy:
    return LinearPolicy(OPTIMAL_ETA, ("intercept", "x1", "x2"))


def _outcome_mean(t, a, u, z, x):
    l1, l2 = _LINEAR[t]
    return _BASE[t] + 10.0 * (a * cate_component(x) + 0.5 * u + 2.0 * z + l1 * x[:, 0] + l2 * x[:, 1])


def _draw(scenario: Scenario):
    rng = np.random.default_rng(scenario.seed)
    n = scenario.n
    x = rng.standard_normal((n, 2))
    t = (rng.random(n) < 0.5).astype(float)
    z = (rng.random(n) < 0.5).astype(float)
    u0 = sample_bridge(rng, n)
    u1 = sample_bridge(rng, n)
    a0 = (rng.random(n) < expit(treatment_logit(scenario.name, 0, z, u0, x))).astype(float)
    a1 = (rng.random(n) < expit(treatment_logit(scenario.name, 1, z, u1, x))).astype(float)
    y0 = _outcome_mean(0, a0, u0, z, x) + rng.standard_normal(n)
    y1 = _outcome_mean(1, a1, u1, z, x) + rng.standard_normal(n)
    return x, t, z, u0, u1, a0, a1, y0, y1


def simulate_cross_section(scenario: Scenario) -> tuple[Dataset, Truth]:
    x, t, z, u0, u1, a0, a1, y0, y1 = _draw(scenario)
    a = t * a1 + (1 - t) * a0
    y = t * y1 + (1 - t) * y0
    data = Dataset(x, a, y, t, z, ("x1", "x2"))
    return data, Truth(x, u0, u1, a0, a1, scenario.name)


def simulate_panel(scenario: Scenario) -> tuple[PanelDataset, Truth]:
    """Same draws as :func:`simulate_cross_section`, with both periods observed."""
    x, _, z, u0, u1, a0, a1, y0, y1 = _draw(scenario)
    data = PanelDataset(x, z, a0, y0, a1, y1, ("x1", "x2"))
    return data, Truth(x, u0, u1, a0, a1, scenario.name)


def simulate(scenario: Scenario):
    return simulate_panel(scenario) if scenario.panel else simulate_cross_section(scenario)


def test_covariates(n: int, seed: int) -> np.ndarray:
    """Independent covariate draws for PCD evaluation."""
    return np.random.default_rng([seed, 7919]).standard_normal((n, 2))


# --------------------------------------------------------------------------
# oracle nuisances


def _cell_moments(x: np.ndarray, scenario: str) -> tuple[np.ndarray, np.ndarray]:
    """``E[p(U)]`` and ``E[p(U) U]`` per cell, where ``p`` is the treatment probability."""
    out0 = np.empty((x.shape[0], 2, 2))
    out1 = np.empty_like(out0)
    w_u = _QUAD_W * _QUAD_U
    for t in (0, 1):
        for z in (0, 1):
            p = expit(treatment_logit(scenario, t, z, _QUAD_U[None, :], x[:, None, :]))
            out0[:, t, z] = p @ _QUAD_W
            out1[:, t, z] = p @ w_u
    return out0, out1


def oracle_mu_a(x: np.ndarray, scenario: str = "main") -> np.ndarray:
    """``P(A = 1 | T = t, Z = z, X = x)`` with the confounder integrated out, ``[i, t, z]``."""
    return _cell_moments(np.atleast_2d(x), scenario)[0]


def oracle_mu_y(x: np.ndarray, scenario: str = "main", mu_a: np.ndarray | None = None) -> np.ndarray:
    x = np.atleast_2d(x)
    mu_a = oracle_mu_a(x, scenario) if mu_a is None else mu_a
    out = np.empty_like(mu_a)
    for t in (0, 1):
        for z in (0, 1):
            # E[U] = 0 and U is independent of (Z, X)
            out[:, t, z] = _outcome_mean(t, mu_a[:, t, z], 0.0, z, x)
    return out


def oracle_predictions(x: np.ndarray, scenario: str = "main", **kwargs) -> NuisancePredictions:
    """True nuisance values at ``x`` (``pi = 1/4`` in every cell)."""
    mu_a = oracle_mu_a(x, scenario)
    pi = np.full_like(mu_a, 0.25)
    return NuisancePredictions(mu_a, oracle_mu_y(x, scenario, mu_a), pi, **kwargs)


def oracle_panel_predictions(x: np.ndarray, scenario: str = "main", **kwargs) -> PanelPredictions:
    x = np.atleast_2d(x)
    mu_a = oracle_mu_a(x, scenario)
    mu_y = oracle_mu_y(x, scenario, mu_a)
    da = mu_a[:, 1, :] - mu_a[:, 0, :]
    dy = mu_y[:, 1, :] - mu_y[:, 0, :]
    return PanelPredictions(dy, da, np.full(x.shape[0], 0.5), **kwargs)


def oracle_nu(x: np.ndarray, policy: LinearPolicy, scenario: str = "main",
              moments: tuple[np.ndarray, np.ndarray] | None = None) -> np.ndarray:
    """``E[(2A - 1) Y 1{A = d(X)} | T = t, Z = z, X = x]`` by quadrature, ``[i, t, z]``.

    With ``m0 = E[p]`` and ``m1 = E[p U]`` (and ``E[U] = 0``) the treated arm
    contributes ``m0 (b + 10 c) + 5 m1`` and the untreated arm
    ``-((1 - m0) b - 5 m1)``, where ``b`` collects the terms free of ``A`` and ``U``.
    """
    x = np.atleast_2d(x)
    m0, m1 = _cell_moments(x, scenario) if moments is None else moments
    d = decide(policy, augment_matrix(x)).astype(float)[:, None, None]
    c = cate_component(x)[:, None, None]
    base = np.empty_like(m0)
    for t in (0, 1):
        l1, l2 = _LINEAR[t]
        for z in (0, 1):
            base[:, t, z] = _BASE[t] + 10.0 * (2.0 * z + l1 * x[:, 0] + l2 * x[:, 1])
    treated = m0 * (base + 10.0 * c) + 5.0 * m1
    untreated = (1.0 - m0) * base - 5.0 * m1
    return d * treated - (1.0 - d) * untreated


def oracle_value(policy: LinearPolicy, n: int = 10**6, seed: int = 12345, scenario: str = "main",
                 chunk: int = 20_000) -> tuple[float, float]:
    """Monte Carlo of ``E[gamma(X)]`` (the weighted value functional) and its standard error."""
    rng = np.random.default_rng(seed)
    total, total_sq, count = 0.0, 0.0, 0
    while count < n:
        m = min(chunk, n - count)
        x = rng.standard_normal((m, 2))
        moments = _cell_moments(x, scenario)
        mu_a = moments[0]
        delta_a = mu_a[:, 1, 1] - mu_a[:, 0, 1] - mu_a[:, 1, 0] + mu_a[:, 0, 0]
        g = gamma_from_nu(oracle_nu(x, policy, scenario, moments), delta_a)
        total += g.sum()
        total_sq += (g**2).sum()
        count += m
    mean = total / count
    return mean, float(np.sqrt((total_sq / count - mean**2) / count))


def oracle_policy_value(policy: LinearPolicy | None = None, n: int = 10**6, seed: int = 2024) -> tuple[float, float]:
    """Monte Carlo of ``E[tau(X) d(X)]`` and its standard error."""
    policy = policy or true_optimal_policy()
    x = np.random.default_rng(seed).standard_normal((n, 2))
    v = true_cate(x) * decide(policy, augment_matrix(x))
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(n))


# --------------------------------------------------------------------------
# evaluation


def pcd(policy: LinearPolicy, test) -> float:
    """Fraction of test units on which ``policy`` agrees with the optimal rule.

    ``test`` is a raw covariate matrix, a :class:`Dataset` or a :class:`Truth`.
    """
    x = test.covariates if isinstance(test, (Dataset, PanelDataset)) else getattr(test, "x", test)
    xa = augment_matrix(np.asarray(x, dtype=float))
    return float(np.mean(decide(policy, xa) == decide(true_optimal_policy(), xa)))


@dataclass
class BenchmarkReport:
    scenario: str
    n: int
    fitter: str
    estimators: tuple[str, ...]
    seeds: list[int]
    pcd: dict[str, list[float]]
    eta_error: dict[str, list[float]]
    trim_counts: dict[str, int] = field(default_factory=dict)
    failures: list[dict] = field(default_factory=list)
    elapsed: float = 0.0

    def rows(self) -> list[dict]:
        out = []
        for r, seed in enumerate(self.seeds):
            for est in self.estimators:
                out.append({
                    "replicate": r, "estimator": est, "pcd": self.pcd[est][r],
                    "n": self.n, "scenario": self.scenario, "seed": seed,
                })
        return out

    def median(self, est: str) -> float:
        return float(np.nanmedian(self.pcd[est]))

    def iqr(self, est: str) -> float:
        q75, q25 = np.nanpercentile(self.pcd[est], [75, 25])
        return float(q75 - q25)

    def ordering_check(self, margin: float = 0.05) -> bool | None:
        good = [e for e in ("wald", "mr1", "mr2") if e in self.estimators]
        bad = [e for e in ("iv_t0", "iv_t1") if e in self.estimators]
        if not good or not bad:
            return None
        return min(self.median(e) for e in good) >= max(self.median(e) for e in bad) + margin

    def summary(self) -> dict:
        check = self.ordering_check()
        return {
            "scenario": self.scenario,
            "n": self.n,
            "fitter": self.fitter,
            "replications": len(self.seeds),
            "median": {e: self.median(e) for e in self.estimators},
            "iqr": {e: self.iqr(e) for e in self.estimators},
            "median_eta_error": {e: float(np.nanmedian(self.eta_error[e])) for e in self.estimators},
            "trim_counts": dict(self.trim_counts),
            "failures": list(self.failures),
            "ordering_check": "n/a" if check is None else ("pass" if check else "fail"),
        }


@dataclass(frozen=True)
class _Job:
    scenario: str
    n: int
    seed: int
    estimators: tuple[str, ...]
    fitter: str
    folds: int
    search: SearchConfig
    fitter_config: dict | None


def _replicate(job: _Job, test_x: np.ndarray):
    data, _ = simulate_cross_section(Scenario(job.scenario, job.n, job.seed))
    x = data.covariates
    if job.fitter == "parametric":
        pred = fit_parametric(data).predict(x)
    else:
        pred = crossfit(data, job.folds, job.fitter, seed=job.seed, config=job.fitter_config).predict(x)
    out = {}
    for j, est in enumerate(job.estimators):
        scores = build_scores(est, pred, data)
        spec = ObjectiveSpec.from_data(scores, data)
        cfg = SearchConfig(**{**job.search.__dict__, "seed": job.seed * 100 + j})
        res = learn_policy(spec, cfg)
        out[est] = (pcd(res.policy, test_x), float(np.linalg.norm(res.policy.eta - OPTIMAL_ETA)))
    return out, pred.trim_counts()


def _run_job(args):
    job, test_x = args
    try:
        return _replicate(job, test_x), None
    except (NuisanceError, ValueError, np.linalg.LinAlgError) as err:
        return None, f"{type(err).__name__}: {err}"


def _workers(n_jobs: int | None) -> int:
    if n_jobs is not None:
        return max(1, n_jobs)
    try:
        return max(1, int(os.environ.get("IDID_THREADS", "1")))
    except ValueError:
        return 1


def run_benchmark(
    scenario: str = "main",
    estimators: Sequence[str] = ESTIMATORS,
    replications: int = 100,
    fitter: str = "parametric",
    test_size: int = 10**5,
    n: int = 5000,
    base_seed: int = 0,
    folds: int = 4,
    search: SearchConfig | None = None,
    fitter_config: dict | None = None,
    n_jobs: int | None = None,
) -> BenchmarkReport:
    """Monte Carlo comparison of estimators by PCD.

    Replicate ``r`` simulates with seed ``base_seed + r``; all replicates
    share one test covariate set.  A failing replicate is recorded in
    ``failures`` with NaN PCD rather than aborting the run.
    """
    Scenario(scenario, n)  # validates the name
    estimators = tuple(estimators)
    unknown = [e for e in estimators if e not in ESTIMATORS]
    if unknown:
        raise ValueError(f"unknown estimators {unknown}; valid: {', '.join(ESTIMATORS)}")
    if replications < 1:
        raise ValueError("replications ≥ 1 required")
    search = search or SearchConfig()
    test_x = test_covariates(test_size, base_seed)
    seeds = [base_seed + r for r in range(replications)]
    jobs = [
        (_Job(scenario, n, s, estimators, fitter, folds, search, fitter_config), test_x)
        for s in seeds
    ]
    start = time.perf_counter()
    workers = _workers(n_jobs)
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_run_job, jobs))
    else:
        results = [_run_job(j) for j in jobs]
    report = BenchmarkReport(
        scenario, n, fitter, estimators, seeds,
        {e: [] for e in estimators}, {e: [] for e in estimators},
    )
    trims = {"delta_a_floored": 0, "pi_trimmed": 0}
    for r, (res, err) in enumerate(results):
        if res is None:
            report.failures.append({"replicate": r, "seed": seeds[r], "error": err})
            for e in estimators:
                report.pcd[e].append(float("nan"))
                report.eta_error[e].append(float("nan"))
            continue
        values, counts = res
        for e in estimators:
            report.pcd[e].append(values[e][0])
            report.eta_error[e].append(values[e][1])
        for k, v in counts.items():
            trims[k] += v
    report.trim_counts = trims
    report.elapsed = time.perf_counter() - start
    return report
