"""Domain types shared by every other module.

Data are held column-wise in numpy arrays; :class:`Observation` and
:class:`PanelObservation` are row views for callers that want one unit at a
time.  Repeated cross-sections assume no unit appears in both periods; that
cannot be checked from the data and is left to the caller.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

INTERCEPT = "intercept"


class ValidationError(ValueError):
    """Raised when a dataset or policy breaks one of its invariants."""


@dataclass(frozen=True)
class Observation:
    x: np.ndarray
    a: int
    y: float
    t: int
    z: int


@dataclass(frozen=True)
class PanelObservation:
    x: np.ndarray
    z: int
    a0: int
    y0: float
    a1: int
    y1: float


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, dtype=float, copy=True)
    arr.setflags(write=False)
    return arr


def _default_names(p: int) -> tuple[str, ...]:
    return tuple(f"x{j + 1}" for j in range(p))


@dataclass(frozen=True)
class Dataset:
    """Repeated cross-section sample ``(X, A, Y, T, Z)``.

    Parameters
    ----------
    x : array, shape (n, p)
        Covariates.  When ``augmented`` is true, column 0 is the intercept.
    a, y, t, z : arrays, shape (n,)
        Treatment, outcome, time period and instrument.
    covariate_names : sequence of str, optional
        Defaults to ``x1..xp``.
    augmented : bool
        Whether an intercept column has been prepended.
    standardized : bool
        Metadata flag; set by :func:`standardize`.
    """

    x: np.ndarray
    a: np.ndarray
    y: np.ndarray
    t: np.ndarray
    z: np.ndarray
    covariate_names: tuple[str, ...] = ()
    augmented: bool = False
    standardized: bool = False

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if x.size else x.reshape(len(self.y), 0)
        object.__setattr__(self, "x", _freeze(x))
        for name in ("a", "y", "t", "z"):
            object.__setattr__(self, name, _freeze(np.ravel(getattr(self, name))))
        n = self.x.shape[0]
        if n < 1:
            raise ValidationError("n ≥ 1 violated")
        if any(len(getattr(self, c)) != n for c in ("a", "y", "t", "z")):
            raise ValidationError("columns have unequal lengths")
        names = tuple(self.covariate_names) or _default_names(self.x.shape[1])
        if self.augmented and names[0] != INTERCEPT:
            names = (INTERCEPT,) + names
        if len(names) != self.x.shape[1]:
            raise ValidationError(
                f"{len(names)} covariate names for {self.x.shape[1]} columns"
            )
        object.__setattr__(self, "covariate_names", names)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        """Number of raw covariates (intercept excluded)."""
        return self.x.shape[1] - int(self.augmented)

    @property
    def covariates(self) -> np.ndarray:
        """Raw covariates without the intercept column."""
        return self.x[:, 1:] if self.augmented else self.x

    @property
    def design(self) -> np.ndarray:
        """Intercept-augmented covariates, as used by linear policies."""
        return self.x if self.augmented else augment_matrix(self.x)

    def __len__(self) -> int:
        return self.n

    def __getitem__(self, i: int) -> Observation:
        return Observation(
            self.x[i], int(self.a[i]), float(self.y[i]), int(self.t[i]), int(self.z[i])
        )

    def subset(self, idx) -> "Dataset":
        return Dataset(
            self.x[idx], self.a[idx], self.y[idx], self.t[idx], self.z[idx],
            self.covariate_names, self.augmented, self.standardized,
        )

    @classmethod
    def from_observations(
        cls, observations: Sequence[Observation], covariate_names: Iterable[str] = ()
    ) -> "Dataset":
        if not observations:
            raise ValidationError("n ≥ 1 violated")
        dims = {np.size(o.x) for o in observations}
        if len(dims) != 1:
            raise ValidationError(f"covariate dimensions differ across rows: {sorted(dims)}")
        x = np.array([np.ravel(o.x) for o in observations], dtype=float)
        return cls(
            x.reshape(len(observations), dims.pop()),
            [o.a for o in observations],
            [o.y for o in observations],
            [o.t for o in observations],
            [o.z for o in observations],
            tuple(covariate_names),
        )


@dataclass(frozen=True)
class PanelDataset:
    """Two-period panel ``(X, Z, A0, Y0, A1, Y1)``; same conventions as :class:`Dataset`."""

    x: np.ndarray
    z: np.ndarray
    a0: np.ndarray
    y0: np.ndarray
    a1: np.ndarray
    y1: np.ndarray
    covariate_names: tuple[str, ...] = ()
    augmented: bool = False
    standardized: bool = False

    def __post_init__(self):
        x = np.asarray(self.x, dtype=float)
        if x.ndim == 1:
            x = x.reshape(-1, 1) if x.size else x.reshape(len(self.y0), 0)
        object.__setattr__(self, "x", _freeze(x))
        for name in ("z", "a0", "y0", "a1", "y1"):
            object.__setattr__(self, name, _freeze(np.ravel(getattr(self, name))))
        n = self.x.shape[0]
        if n < 1:
            raise ValidationError("n ≥ 1 violated")
        if any(len(getattr(self, c)) != n for c in ("z", "a0", "y0", "a1", "y1")):
            raise ValidationError("columns have unequal lengths")
        names = tuple(self.covariate_names) or _default_names(self.x.shape[1])
        if self.augmented and names[0] != INTERCEPT:
            names = (INTERCEPT,) + names
        if len(names) != self.x.shape[1]:
            raise ValidationError(
                f"{len(names)} covariate names for {self.x.shape[1]} columns"
            )
        object.__setattr__(self, "covariate_names", names)

    n = Dataset.n
    p = Dataset.p
    covariates = Dataset.covariates
    design = Dataset.design
    __len__ = Dataset.__len__

    def __getitem__(self, i: int) -> PanelObservation:
        return PanelObservation(
            self.x[i], int(self.z[i]), int(self.a0[i]), float(self.y0[i]),
            int(self.a1[i]), float(self.y1[i]),
        )

    def subset(self, idx) -> "PanelDataset":
        return PanelDataset(
            self.x[idx], self.z[idx], self.a0[idx], self.y0[idx], self.a1[idx],
            self.y1[idx], self.covariate_names, self.augmented, self.standardized,
        )


@dataclass(frozen=True)
class LinearPolicy:
    """Linear rule ``d(x) = 1{eta' x > 0}`` over intercept-augmented ``x``.

    ``eta`` is rescaled to unit L2 norm on construction; the rule only depends
    on the direction of ``eta``.
    """

    eta: np.ndarray
    names: tuple[str, ...] = field(default=(), compare=False)

    def __post_init__(self):
        eta = np.ravel(np.asarray(self.eta, dtype=float))
        norm = np.linalg.norm(eta)
        if eta.size == 0 or not np.isfinite(norm) or norm == 0:
            raise ValidationError("policy coefficients must be finite and nonzero")
        object.__setattr__(self, "eta", _freeze(eta / norm))

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.eta))

    @property
    def dim(self) -> int:
        return self.eta.size

    def decide(self, x) -> np.ndarray | int:
        return decide(self, x)

    def complement(self) -> "LinearPolicy":
        # -eta flips every decision off the boundary hyperplane
        return LinearPolicy(-self.eta, self.names)


def augment_matrix(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return np.concatenate([[1.0], x])
    return np.hstack([np.ones((x.shape[0], 1)), x])


def augment_with_intercept(data: Dataset | PanelDataset) -> Dataset | PanelDataset:
    """Prepend a column of ones and an ``"intercept"`` name."""
    if data.augmented:
        raise ValidationError("dataset is already intercept-augmented")
    kwargs = {f: getattr(data, f) for f in data.__dataclass_fields__}
    kwargs["x"] = augment_matrix(data.x)
    kwargs["covariate_names"] = (INTERCEPT,) + tuple(data.covariate_names)
    kwargs["augmented"] = True
    return type(data)(**kwargs)


def standardize(data: Dataset | PanelDataset) -> Dataset | PanelDataset:
    """Z-score the raw covariates.  Changes the meaning of learned ``eta``."""
    cov = data.covariates
    sd = cov.std(axis=0)
    sd[sd == 0] = 1.0
    cov = (cov - cov.mean(axis=0)) / sd
    kwargs = {f: getattr(data, f) for f in data.__dataclass_fields__}
    kwargs["x"] = augment_matrix(cov) if data.augmented else cov
    kwargs["standardized"] = True
    return type(data)(**kwargs)


def decide(policy: LinearPolicy, x) -> np.ndarray | int:
    """Apply ``policy`` to one augmented covariate vector or a matrix of them.

    The boundary ``eta' x = 0`` maps to 0.
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != policy.dim:
        raise ValidationError(
            f"dimension mismatch: policy has {policy.dim} coefficients, x has {x.shape[-1]}"
        )
    out = (x @ policy.eta > 0).astype(int)
    return int(out) if out.ndim == 0 else out


def _binary_violations(name: str, col: np.ndarray) -> list[str]:
    bad = np.flatnonzero(~np.isin(col, (0.0, 1.0)))
    return [f"row {i}: {name} ∉ {{0,1}}" for i in bad]


def _finite_violations(name: str, col: np.ndarray) -> list[str]:
    return [f"row {i}: {name} not finite" for i in np.flatnonzero(~np.isfinite(col))]


def validate(data: Dataset | PanelDataset) -> list[str]:
    """Return every invariant violation as a row-indexed message (empty if ok)."""
    out: list[tuple[int, str]] = []
    if isinstance(data, PanelDataset):
        checks = [("z", "bin"), ("a0", "bin"), ("a1", "bin"), ("y0", "fin"), ("y1", "fin")]
    else:
        checks = [("a", "bin"), ("y", "fin"), ("t", "bin"), ("z", "bin")]
    for name, kind in checks:
        col = getattr(data, name)
        msgs = _binary_violations(name, col) if kind == "bin" else _finite_violations(name, col)
        out.extend((int(m.split(":")[0][4:]), m) for m in msgs)
    rows, cols = np.nonzero(~np.isfinite(data.x))
    out.extend((int(i), f"row {i}: x[{j}] not finite") for i, j in zip(rows, cols))
    if data.augmented:
        out.extend(
            (int(i), f"row {i}: intercept coordinate ≠ 1")
            for i in np.flatnonzero(data.x[:, 0] != 1.0)
        )
    out.sort(key=lambda r: r[0])
    return [m for _, m in out]


def check(data: Dataset | PanelDataset) -> None:
    """Raise :class:`ValidationError` listing the first violations, if any."""
    problems = validate(data)
    if problems:
        more = f" (+{len(problems) - 5} more)" if len(problems) > 5 else ""
        raise ValidationError("; ".join(problems[:5]) + more)
