"""Nuisance regressions for the instrumented difference-in-differences scores.

Cross-section nuisances are fitted separately in each ``(t, z)`` cell:

* ``mu_a(t, z, x) = P(A = 1 | T = t, Z = z, X = x)``
* ``mu_y(t, z, x) = E[Y | T = t, Z = z, X = x]``
* ``pi(t, z, x) = P(T = t, Z = z | X = x)`` as one 4-category model.

Panel nuisances are fitted per instrument arm: ``E[Y1 - Y0 | X, Z = z]``,
``E[A1 - A0 | X, Z = z]`` and ``P(Z = 1 | X)``.

Fitted models are evaluated into :class:`NuisancePredictions` /
:class:`PanelPredictions`, plain arrays that the score functions consume.
Oracle or deliberately corrupted nuisances are built the same way.
"""
from __future__ import annotations

import os
import re
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np
from scipy.special import expit, log_expit, logsumexp

from .core import Dataset, PanelDataset, ValidationError

CELLS = ((0, 0), (0, 1), (1, 0), (1, 1))
TRIM_EPS = 0.01
DELTA_FLOOR = 0.05


class NuisanceError(RuntimeError):
    """A nuisance model could not be fitted."""


class EmptyCellError(NuisanceError):
    pass


class DegenerateCellError(NuisanceError):
    pass


class ConvergenceError(NuisanceError):
    pass


class InsufficientDataError(NuisanceError):
    pass


def _add_intercept(x: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((x.shape[0], 1)), x])


# --------------------------------------------------------------------------
# parametric models

@dataclass(frozen=True)
class LinearModel:
    coef: np.ndarray
    columns: tuple[int, ...] | None = None

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = x if self.columns is None else x[:, list(self.columns)]
        return self.coef[0] + x @ self.coef[1:]


@dataclass(frozen=True)
class LogisticModel:
    coef: np.ndarray
    n_iter: int
    grad_norm: float
    columns: tuple[int, ...] | None = None

    def predict(self, x: np.ndarray) -> np.ndarray:
        x = x if self.columns is None else x[:, list(self.columns)]
        return expit(self.coef[0] + x @ self.coef[1:])


@dataclass(frozen=True)
class MultinomialModel:
    """Softmax regression; row ``k`` of ``coef`` is category ``k + 1`` vs category 0."""

    coef: np.ndarray
    n_classes: int
    n_iter: int
    grad_norm: float
    columns: tuple[int, ...] | None = None

    def predict_proba(self, x: np.ndarray) -> np.ndarray:
        x = x if self.columns is None else x[:, list(self.columns)]
        eta = np.hstack([np.zeros((x.shape[0], 1)), _add_intercept(x) @ self.coef.T])
        return np.exp(eta - logsumexp(eta, axis=1, keepdims=True))


def fit_ols(x: np.ndarray, y: np.ndarray) -> LinearModel:
    # centring makes a constant target come back exactly
    xm, ym = x.mean(axis=0), y.mean()
    if x.shape[1]:
        beta = np.linalg.lstsq(x - xm, y - ym, rcond=None)[0]
    else:
        beta = np.zeros(0)
    return LinearModel(np.concatenate([[ym - xm @ beta], beta]))


def _newton(loglik, grad_hess, beta, max_iter, tol, label):
    ll = loglik(beta)
    for it in range(1, max_iter + 1):
        g, h = grad_hess(beta)
        gnorm = float(np.max(np.abs(g))) if g.size else 0.0
        if gnorm < tol:
            return beta, it - 1, gnorm
        try:
            step = np.linalg.solve(h, g)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(h, g, rcond=None)[0]
        s = 1.0
        while True:
            cand = beta + s * step
            ll_new = loglik(cand)
            if ll_new >= ll - 1e-12 or s < 1e-10:
                break
            s *= 0.5
        beta, ll = cand, ll_new
    g, _ = grad_hess(beta)
    raise ConvergenceError(
        f"{label}: no convergence after {max_iter} iterations "
        f"(max |gradient| = {np.max(np.abs(g)):.3g}); possible separation"
    )


def fit_logistic(x: np.ndarray, y: np.ndarray, max_iter: int = 100, tol: float = 1e-8) -> LogisticModel:
    """Binary logistic MLE by damped Newton with step-halving.

    Convergence is declared when the max-abs gradient of the mean
    log-likelihood falls below ``tol``.
    """
    y = np.asarray(y, dtype=float)
    if np.all(y == y[0]):
        raise DegenerateCellError(f"treatment is constant ({y[0]:g}) in this cell")
    xd = _add_intercept(x)
    n = len(y)

    def loglik(b):
        eta = xd @ b
        return float(np.sum(y * log_expit(eta) + (1 - y) * log_expit(-eta)) / n)

    def grad_hess(b):
        p = expit(xd @ b)
        w = p * (1 - p)
        return xd.T @ (y - p) / n, (xd * w[:, None]).T @ xd / n

    beta, it, gnorm = _newton(loglik, grad_hess, np.zeros(xd.shape[1]), max_iter, tol, "logistic")
    # a hyperplane that classifies every row correctly means the MLE does not exist
    eta = xd @ beta
    if np.all((eta > 0) == (y == 1)):
        raise ConvergenceError(f"logistic: perfect separation after {it} iterations")
    return LogisticModel(beta, it, gnorm)


def fit_multinomial(
    x: np.ndarray, labels: np.ndarray, n_classes: int, max_iter: int = 100, tol: float = 1e-8
) -> MultinomialModel:
    """Softmax MLE with category 0 as reference, damped Newton."""
    labels = np.asarray(labels, dtype=int)
    missing = sorted(set(range(n_classes)) - set(np.unique(labels)))
    if missing:
        raise EmptyCellError(f"categories {missing} have no observations")
    xd = _add_intercept(x)
    n, d = xd.shape
    k = n_classes - 1
    onehot = np.eye(n_classes)[labels][:, 1:]

    def probs(b):
        eta = np.hstack([np.zeros((n, 1)), xd @ b.reshape(k, d).T])
        return eta, np.exp(eta - logsumexp(eta, axis=1, keepdims=True))

    def loglik(b):
        eta, _ = probs(b)
        return float(np.mean(eta[np.arange(n), labels] - logsumexp(eta, axis=1)))

    def grad_hess(b):
        _, p = probs(b)
        p = p[:, 1:]
        g = ((onehot - p).T @ xd / n).ravel()
        w = np.einsum("ij,jk->ijk", p, np.eye(k)) - np.einsum("ij,ik->ijk", p, p)
        h = np.einsum("ijk,ia,ib->jakb", w, xd, xd).reshape(k * d, k * d) / n
        return g, h

    beta, it, gnorm = _newton(loglik, grad_hess, np.zeros(k * d), max_iter, tol, "multinomial")
    return MultinomialModel(beta.reshape(k, d), n_classes, it, gnorm)


# --------------------------------------------------------------------------
# model specification strings

_FORMULA = re.compile(r"^\s*(\w+)\s*~\s*(.+?)\s*$")


def parse_formula(formula: str, covariate_names) -> tuple[str, tuple[int, ...]]:
    """Parse ``"target ~ x1 + x2"`` into the target and raw-covariate indices.

    Only linear-in-coordinates terms are accepted; ``1`` and ``intercept`` are
    ignored (every model carries an intercept).
    """
    m = _FORMULA.match(formula)
    if not m:
        raise ValueError(f"cannot parse model formula {formula!r}")
    names = list(covariate_names)
    cols = []
    for term in (s.strip() for s in m.group(2).split("+")):
        if term in ("1", "intercept"):
            continue
        if term == ".":
            cols.extend(range(len(names)))
            continue
        if term not in names:
            raise ValueError(f"unknown covariate {term!r} in {formula!r}")
        cols.append(names.index(term))
    return m.group(1), tuple(dict.fromkeys(cols))


# --------------------------------------------------------------------------
# backends


class ParametricBackend:
    """Linear regression for continuous targets, logistic / multinomial MLE otherwise."""

    name = "parametric"

    def __init__(self, max_iter: int = 100, tol: float = 1e-8):
        self.max_iter = max_iter
        self.tol = tol

    def min_cell_size(self, p: int) -> int:
        return p + 2

    def regression(self, x, y):
        return fit_ols(x, y)

    def probability(self, x, y):
        return fit_logistic(x, y, self.max_iter, self.tol)

    def classifier(self, x, labels, n_classes):
        return fit_multinomial(x, labels, n_classes, self.max_iter, self.tol)


@dataclass(frozen=True)
class _SklearnRegressor:
    model: object

    def predict(self, x):
        return self.model.predict(x)


@dataclass(frozen=True)
class _SklearnClassifier:
    model: object
    n_classes: int

    def predict_proba(self, x):
        out = np.zeros((x.shape[0], self.n_classes))
        out[:, self.model.classes_.astype(int)] = self.model.predict_proba(x)
        return out


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("IDID_THREADS", "1")))
    except ValueError:
        return 1


class BaggedTreesBackend:
    """Bootstrap-aggregated depth-limited CART trees (scikit-learn).

    Parameters
    ----------
    n_trees : int
        Number of bootstrap trees ``B``.
    max_depth : int
    min_leaf : int
        Minimum observations per leaf; a cell smaller than this is rejected.
    seed : int
    """

    name = "bagged_trees"

    def __init__(self, n_trees: int = 200, max_depth: int = 6, min_leaf: int = 25, seed: int = 0):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.seed = seed

    def min_cell_size(self, p: int) -> int:
        return self.min_leaf

    def _check(self, n):
        if n < self.min_leaf:
            raise InsufficientDataError(
                f"insufficient data for backend config: {n} rows < min_leaf {self.min_leaf}"
            )

    def regression(self, x, y):
        from sklearn.ensemble import BaggingRegressor
        from sklearn.tree import DecisionTreeRegressor

        self._check(len(y))
        tree = DecisionTreeRegressor(max_depth=self.max_depth, min_samples_leaf=self.min_leaf)
        model = BaggingRegressor(
            tree, n_estimators=self.n_trees, bootstrap=True, random_state=self.seed,
            n_jobs=_threads(),
        )
        return _SklearnRegressor(model.fit(x, y))

    def probability(self, x, y):
        # regression trees on a 0/1 target stay inside [0, 1]
        return self.regression(x, y)

    def classifier(self, x, labels, n_classes):
        from sklearn.ensemble import BaggingClassifier
        from sklearn.tree import DecisionTreeClassifier

        self._check(len(labels))
        tree = DecisionTreeClassifier(max_depth=self.max_depth, min_samples_leaf=self.min_leaf)
        model = BaggingClassifier(
            tree, n_estimators=self.n_trees, bootstrap=True, random_state=self.seed,
            n_jobs=_threads(),
        )
        return _SklearnClassifier(model.fit(x, labels), n_classes)


BACKENDS: dict[str, Callable[..., object]] = {
    "parametric": ParametricBackend,
    "bagged_trees": BaggedTreesBackend,
}


def register_backend(name: str, factory: Callable[..., object]) -> None:
    BACKENDS[name] = factory


def make_backend(backend="bagged_trees", config: Mapping | None = None):
    if not isinstance(backend, str):
        return backend
    if backend == "nonparametric":
        backend = "bagged_trees"
    if backend not in BACKENDS:
        raise KeyError(f"unknown backend {backend!r}; registered: {sorted(BACKENDS)}")
    return BACKENDS[backend](**dict(config or {}))


# --------------------------------------------------------------------------
# predictions


def floor_delta(d: np.ndarray, floor: float) -> tuple[np.ndarray, int]:
    """Push ``|d| < floor`` out to ``sign(d) * floor`` (sign of 0 is +)."""
    d = np.asarray(d, dtype=float)
    small = np.abs(d) < floor
    sign = np.where(d < 0, -1.0, 1.0)
    return np.where(small, sign * floor, d), int(np.count_nonzero(small))


def double_difference(cells: np.ndarray) -> np.ndarray:
    """``c(1,1) - c(0,1) - c(1,0) + c(0,0)`` for arrays indexed ``[..., t, z]``."""
    return cells[..., 1, 1] - cells[..., 0, 1] - cells[..., 1, 0] + cells[..., 0, 0]


@dataclass(frozen=True)
class NuisancePredictions:
    """Nuisance values at a set of covariate rows, indexed ``[i, t, z]``.

    ``tau`` overrides the ratio ``delta_y / delta_a`` when given; that is how
    a separately specified effect model enters the scores.
    """

    mu_a: np.ndarray
    mu_y: np.ndarray
    pi: np.ndarray
    tau: np.ndarray | None = None
    trim_eps: float = TRIM_EPS
    delta_floor: float = DELTA_FLOOR

    @property
    def n(self) -> int:
        return self.mu_a.shape[0]

    @property
    def pi_trimmed(self) -> np.ndarray:
        return np.clip(self.pi, self.trim_eps, 1 - self.trim_eps)

    @property
    def n_pi_trimmed(self) -> int:
        return int(np.count_nonzero((self.pi < self.trim_eps) | (self.pi > 1 - self.trim_eps)))

    @property
    def delta_a_raw(self) -> np.ndarray:
        return double_difference(self.mu_a)

    @property
    def delta_a(self) -> np.ndarray:
        return floor_delta(self.delta_a_raw, self.delta_floor)[0]

    @property
    def n_delta_floored(self) -> int:
        return floor_delta(self.delta_a_raw, self.delta_floor)[1]

    @property
    def delta_y(self) -> np.ndarray:
        return double_difference(self.mu_y)

    @property
    def ratio(self) -> np.ndarray:
        return self.delta_y / self.delta_a if self.tau is None else self.tau

    def at(self, t, z):
        """Gather ``(mu_a, mu_y, pi)`` at each unit's observed cell."""
        i = np.arange(self.n)
        t = np.asarray(t, dtype=int)
        z = np.asarray(z, dtype=int)
        return self.mu_a[i, t, z], self.mu_y[i, t, z], self.pi_trimmed[i, t, z]

    def period_delta(self, period: int) -> np.ndarray:
        """Instrument effect on treatment within one period, floored."""
        d = self.mu_a[:, period, 1] - self.mu_a[:, period, 0]
        return floor_delta(d, self.delta_floor)[0]

    def period_pi(self, period: int) -> np.ndarray:
        """``P(Z = z | X, T = period)`` with shape (n, 2), trimmed."""
        joint = self.pi[:, period, :]
        cond = joint / joint.sum(axis=1, keepdims=True)
        return np.clip(cond, self.trim_eps, 1 - self.trim_eps)

    def with_(self, **changes) -> "NuisancePredictions":
        return replace(self, **changes)

    def trim_counts(self) -> dict[str, int]:
        return {"delta_a_floored": self.n_delta_floored, "pi_trimmed": self.n_pi_trimmed}


@dataclass(frozen=True)
class CellNuisances:
    """Fitted per-cell models.  ``mu_a``/``mu_y`` map ``(t, z)`` to a model."""

    mu_a: Mapping[tuple[int, int], object]
    mu_y: Mapping[tuple[int, int], object]
    pi: object
    trim_eps: float = TRIM_EPS
    delta_floor: float = DELTA_FLOOR
    backend: str = "parametric"
    diagnostics: Mapping = field(default_factory=dict)

    def predict_mu(self, target: str, t: int, z: int, x: np.ndarray) -> np.ndarray:
        models = self.mu_a if target.upper() == "A" else self.mu_y
        out = models[(t, z)].predict(np.atleast_2d(x))
        return np.clip(out, 0.0, 1.0) if target.upper() == "A" else out

    def predict_pi_raw(self, x: np.ndarray) -> np.ndarray:
        """Untrimmed ``P(T = t, Z = z | x)``, shape (n, 2, 2); rows sum to 1."""
        return self.pi.predict_proba(np.atleast_2d(x)).reshape(-1, 2, 2)

    def predict(self, x: np.ndarray) -> NuisancePredictions:
        x = np.atleast_2d(x)
        mu_a = np.empty((x.shape[0], 2, 2))
        mu_y = np.empty((x.shape[0], 2, 2))
        for t, z in CELLS:
            mu_a[:, t, z] = self.predict_mu("A", t, z, x)
            mu_y[:, t, z] = self.predict_mu("Y", t, z, x)
        return NuisancePredictions(
            mu_a, mu_y, self.predict_pi_raw(x), None, self.trim_eps, self.delta_floor
        )


def delta(nuis: CellNuisances, target: str, x: np.ndarray) -> np.ndarray:
    """Double difference of cell predictions; floored when ``target`` is A."""
    x = np.atleast_2d(x)
    cells = np.stack(
        [np.stack([nuis.predict_mu(target, t, z, x) for z in (0, 1)], -1) for t in (0, 1)], -2
    )
    d = double_difference(cells)
    if target.upper() == "A":
        d = floor_delta(d, nuis.delta_floor)[0]
    return d


# --------------------------------------------------------------------------
# fitting


def _cell_index(data: Dataset, t: int, z: int) -> np.ndarray:
    return np.flatnonzero((data.t == t) & (data.z == z))


def _formula_columns(formulas, names) -> dict[str, tuple[int, ...] | None]:
    cols: dict[str, tuple[int, ...] | None] = {"a": None, "y": None, "tz": None}
    for f in formulas or ():
        target, idx = parse_formula(f, names)
        if target in ("pi", "t", "z"):
            target = "tz"
        if target not in cols:
            raise ValueError(f"unknown formula target {target!r}; expected a, y or tz")
        cols[target] = idx
    return cols


def _subset_cols(x, cols):
    return x if cols is None else x[:, list(cols)]


def _fit_cells(data: Dataset, backend, formulas=None, trim_eps=TRIM_EPS, delta_floor=DELTA_FLOOR,
               label: str = "") -> CellNuisances:
    names = data.covariate_names[int(data.augmented):]
    cols = _formula_columns(formulas, names)
    x = data.covariates
    minimum = backend.min_cell_size(x.shape[1])
    mu_a, mu_y, diag = {}, {}, {}
    for t, z in CELLS:
        idx = _cell_index(data, t, z)
        where = f"{label}cell (t={t}, z={z})"
        if idx.size == 0:
            raise EmptyCellError(f"{where} is empty")
        if idx.size < minimum:
            if isinstance(backend, BaggedTreesBackend):
                raise InsufficientDataError(
                    f"insufficient data for backend config: {where} has {idx.size} rows "
                    f"< min_leaf {backend.min_leaf}"
                )
            raise EmptyCellError(f"{where} has {idx.size} rows; need at least {minimum}")
        xa = _subset_cols(x[idx], cols["a"])
        xy = _subset_cols(x[idx], cols["y"])
        try:
            ma = backend.probability(xa, data.a[idx])
            my = backend.regression(xy, data.y[idx])
        except NuisanceError as err:
            raise type(err)(f"{where}: {err}") from err
        if cols["a"] is not None:
            ma = replace(ma, columns=cols["a"]) if hasattr(ma, "columns") else _Columns(ma, cols["a"])
        if cols["y"] is not None:
            my = replace(my, columns=cols["y"]) if hasattr(my, "columns") else _Columns(my, cols["y"])
        mu_a[(t, z)], mu_y[(t, z)] = ma, my
        if hasattr(ma, "n_iter"):
            diag[f"mu_a{t}{z}_iterations"] = ma.n_iter
    labels = (2 * data.t + data.z).astype(int)
    try:
        pi = backend.classifier(_subset_cols(x, cols["tz"]), labels, 4)
    except NuisanceError as err:
        raise type(err)(f"{label}pi model: {err}") from err
    if cols["tz"] is not None:
        pi = replace(pi, columns=cols["tz"]) if hasattr(pi, "columns") else _Columns(pi, cols["tz"])
    if hasattr(pi, "n_iter"):
        diag["pi_iterations"] = pi.n_iter
    return CellNuisances(mu_a, mu_y, pi, trim_eps, delta_floor, backend.name, diag)


@dataclass(frozen=True)
class _Columns:
    model: object
    columns: tuple[int, ...]

    def predict(self, x):
        return self.model.predict(x[:, list(self.columns)])

    def predict_proba(self, x):
        return self.model.predict_proba(x[:, list(self.columns)])


def fit_parametric(data: Dataset, formulas=None, trim_eps: float = TRIM_EPS,
                   delta_floor: float = DELTA_FLOOR, max_iter: int = 100,
                   tol: float = 1e-8) -> CellNuisances:
    """Logistic ``mu_a``, linear ``mu_y`` per cell and multinomial ``pi``.

    ``formulas`` is an optional list such as ``["a ~ x1 + x2", "y ~ x1",
    "tz ~ x2"]``; by default every covariate enters every model.
    """
    return _fit_cells(data, ParametricBackend(max_iter, tol), formulas, trim_eps, delta_floor)


def fit_nonparametric(data: Dataset, backend="bagged_trees", config: Mapping | None = None,
                      trim_eps: float = TRIM_EPS, delta_floor: float = DELTA_FLOOR) -> CellNuisances:
    return _fit_cells(data, make_backend(backend, config), None, trim_eps, delta_floor)


def fold_split(n: int, k: int, seed) -> np.ndarray:
    """Balanced random fold labels in ``0..k-1``; a pure function of its inputs."""
    if k < 2:
        raise ValueError("K ≥ 2 required")
    if n < k:
        raise ValueError(f"cannot split {n} units into {k} folds")
    perm = np.random.default_rng(seed).permutation(n)
    folds = np.empty(n, dtype=int)
    folds[perm] = np.arange(n) % k
    return folds


@dataclass(frozen=True)
class CrossFitNuisances:
    """``fits[k]`` was trained on every fold except ``k``."""

    fold_assignment: np.ndarray
    fits: tuple
    seed: object

    @property
    def k(self) -> int:
        return len(self.fits)

    def predict(self, x: np.ndarray):
        """Out-of-fold predictions for the ``n`` training units (row order preserved)."""
        x = np.atleast_2d(x)
        if x.shape[0] != len(self.fold_assignment):
            raise ValidationError("cross-fit predictions are only defined for the training units")
        parts = []
        for k, fit in enumerate(self.fits):
            idx = np.flatnonzero(self.fold_assignment == k)
            parts.append((idx, fit.predict(x[idx])))
        return _merge(parts, len(self.fold_assignment))


def _merge(parts, n):
    idx0, first = parts[0]
    out = {}
    for name in first.__dataclass_fields__:
        v = getattr(first, name)
        if isinstance(v, np.ndarray):
            arr = np.empty((n,) + v.shape[1:])
            for idx, pred in parts:
                arr[idx] = getattr(pred, name)
            out[name] = arr
        else:
            out[name] = v
    return type(first)(**out)


def crossfit(data, k: int = 4, fitter="parametric", seed=0, **kwargs) -> CrossFitNuisances:
    """K-fold cross-fitting for cross-section or panel data.

    ``fitter`` is ``"parametric"``, ``"nonparametric"`` (bagged trees), a
    registered backend name, or a backend instance.  ``kwargs`` go to the
    underlying fit function.
    """
    folds = fold_split(data.n, k, seed)
    config = kwargs.pop("config", None)
    fits = []
    for j in range(k):
        train = data.subset(np.flatnonzero(folds != j))
        label = f"fold {j + 1}: "
        try:
            if isinstance(data, PanelDataset):
                fits.append(fit_panel(train, fitter, config, **kwargs))
            elif fitter == "parametric":
                fits.append(_fit_cells(train, ParametricBackend(), **kwargs, label=label))
            else:
                backend = make_backend(fitter, config)
                fits.append(_fit_cells(train, backend, **kwargs, label=label))
        except NuisanceError as err:
            msg = str(err)
            raise type(err)(msg if msg.startswith(label) else label + msg) from err
    return CrossFitNuisances(folds, tuple(fits), seed)


# --------------------------------------------------------------------------
# panel


@dataclass(frozen=True)
class PanelPredictions:
    """Panel nuisances at covariate rows: ``dy[:, z]``, ``da[:, z]``, ``pi_z``."""

    dy: np.ndarray
    da: np.ndarray
    pi_z: np.ndarray
    trim_eps: float = TRIM_EPS
    delta_floor: float = DELTA_FLOOR

    @property
    def n(self) -> int:
        return self.dy.shape[0]

    @property
    def pi_trimmed(self) -> np.ndarray:
        return np.clip(self.pi_z, self.trim_eps, 1 - self.trim_eps)

    @property
    def da_contrast(self) -> np.ndarray:
        return floor_delta(self.da[:, 1] - self.da[:, 0], self.delta_floor)[0]

    @property
    def dy_contrast(self) -> np.ndarray:
        return self.dy[:, 1] - self.dy[:, 0]

    def trim_counts(self) -> dict[str, int]:
        n_floor = floor_delta(self.da[:, 1] - self.da[:, 0], self.delta_floor)[1]
        n_pi = int(np.count_nonzero((self.pi_z < self.trim_eps) | (self.pi_z > 1 - self.trim_eps)))
        return {"delta_a_floored": n_floor, "pi_trimmed": n_pi}


@dataclass(frozen=True)
class PanelNuisances:
    delta_y_z: Mapping[int, object]
    delta_a_z: Mapping[int, object]
    pi_z: object
    trim_eps: float = TRIM_EPS
    delta_floor: float = DELTA_FLOOR
    backend: str = "parametric"

    def predict(self, x: np.ndarray) -> PanelPredictions:
        x = np.atleast_2d(x)
        dy = np.column_stack([self.delta_y_z[z].predict(x) for z in (0, 1)])
        da = np.column_stack([self.delta_a_z[z].predict(x) for z in (0, 1)])
        return PanelPredictions(dy, da, self.pi_z.predict(x), self.trim_eps, self.delta_floor)


def fit_panel(data: PanelDataset, fitter="parametric", config: Mapping | None = None,
              trim_eps: float = TRIM_EPS, delta_floor: float = DELTA_FLOOR) -> PanelNuisances:
    """Per-arm regressions of ``y1 - y0`` and ``a1 - a0`` on ``x``, plus ``P(Z=1|x)``."""
    backend = ParametricBackend() if fitter == "parametric" else make_backend(fitter, config)
    x = data.covariates
    dy, da = {}, {}
    for z in (0, 1):
        idx = np.flatnonzero(data.z == z)
        if idx.size == 0:
            raise EmptyCellError(f"instrument group z={z} is empty")
        if idx.size < backend.min_cell_size(x.shape[1]):
            raise EmptyCellError(f"instrument group z={z} has only {idx.size} rows")
        dy[z] = backend.regression(x[idx], data.y1[idx] - data.y0[idx])
        da[z] = backend.regression(x[idx], data.a1[idx] - data.a0[idx])
    pz = backend.probability(x, data.z)
    return PanelNuisances(dy, da, pz, trim_eps, delta_floor, backend.name)
