"""Direct policy search over linear rules on the unit sphere.

The empirical objective is piecewise constant in ``eta``, so the search is
gradient free: an evolutionary strategy with tangent-space Gaussian
mutations, tournament selection and elitism, followed by a pattern-search
polish.  Ties in objective are broken by the larger mean margin
``mean |eta' x_i|``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, LinearPolicy, PanelDataset, ValidationError, decide
from .scores import LINEAR, MATCH_INSTRUMENT, MATCH_TREATMENT, ScoreVector


@dataclass(frozen=True)
class ObjectiveSpec:
    """Scores plus everything needed to evaluate ``M(eta)``.

    ``design`` is the intercept-augmented covariate matrix and ``match`` the
    treatment or instrument column for the two classification forms.
    """

    scores: ScoreVector
    design: np.ndarray
    match: np.ndarray | None = None

    def __post_init__(self):
        design = np.asarray(self.design, dtype=float)
        object.__setattr__(self, "design", design)
        if design.shape[0] != len(self.scores):
            raise ValidationError("scores and design have different numbers of rows")
        if self.scores.form != LINEAR and self.match is None:
            raise ValidationError(f"form {self.scores.form} needs a treatment/instrument column")

    @classmethod
    def from_data(cls, scores: ScoreVector, data: Dataset | PanelDataset) -> "ObjectiveSpec":
        match = None
        if scores.form == MATCH_TREATMENT:
            match = data.a
        elif scores.form == MATCH_INSTRUMENT:
            match = data.z
        return cls(scores, data.design, match)

    @property
    def dim(self) -> int:
        return self.design.shape[1]

    @property
    def n(self) -> int:
        return self.design.shape[0]

    def linearized(self) -> tuple[np.ndarray, float]:
        """Weights ``w`` and constant ``c`` with ``M(eta) = c + mean(w * d)``.

        For a match form, ``s 1{m = d} = s (1 - m) + s (2m - 1) d``.
        """
        s = self.scores.values
        if self.scores.form == LINEAR:
            return s, 0.0
        m = np.asarray(self.match, dtype=float)
        return s * (2 * m - 1), float(np.mean(s * (1 - m)))


def evaluate_objective(spec: ObjectiveSpec, eta) -> float:
    """Empirical objective at ``eta``; only the direction of ``eta`` matters."""
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (spec.dim,):
        raise ValidationError(f"dimension mismatch: eta has {eta.size}, design has {spec.dim}")
    d = (spec.design @ eta > 0).astype(float)
    s = spec.scores.values
    if spec.scores.form == LINEAR:
        return float(np.mean(s * d))
    return float(np.mean(s * (spec.match == d)))


class _Batch:
    """Vectorized objective and margin for many candidates at once."""

    def __init__(self, spec: ObjectiveSpec):
        self.x = spec.design
        self.w, self.c = spec.linearized()
        self.n = spec.n
        self.calls = 0

    def __call__(self, etas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        self.calls += len(etas)
        proj = self.x @ etas.T
        obj = self.c + (self.w @ (proj > 0)) / self.n
        margin = np.abs(proj).mean(axis=0)
        return obj, margin


def _order(obj: np.ndarray, margin: np.ndarray) -> np.ndarray:
    """Indices sorted best first: larger objective, then larger margin."""
    return np.lexsort((-margin, -obj))


def _normalize(v: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(v, axis=-1, keepdims=True)
    norms[norms == 0] = 1.0
    return v / norms


def _tangent_noise(rng, etas: np.ndarray, scale: float) -> np.ndarray:
    v = rng.normal(0.0, scale, etas.shape)
    v -= np.sum(v * etas, axis=1, keepdims=True) * etas
    return v


@dataclass(frozen=True)
class SearchConfig:
    population: int = 60
    generations: int = 150
    restarts: int = 5
    seed: int = 0
    mutation_scale: float = 0.3
    mutation_decay: float = 0.98
    tournament: int = 3
    elitism: int = 2
    crossover_rate: float = 0.5
    window: int = 40
    polish: bool = True

    def __post_init__(self):
        for name in ("population", "generations", "restarts", "tournament", "window"):
            if getattr(self, name) < 1:
                raise ValueError(f"SearchConfig.{name} must be ≥ 1")
        if self.mutation_scale <= 0:
            raise ValueError("SearchConfig.mutation_scale must be positive")
        if not 0 <= self.elitism <= self.population:
            raise ValueError("SearchConfig.elitism must lie in [0, population]")


@dataclass(frozen=True)
class SearchResult:
    policy: LinearPolicy
    objective: float
    margin: float
    trace: list[float] = field(repr=False)
    evaluations: int = 0


def _better(o1, m1, o2, m2) -> bool:
    return o1 > o2 or (o1 == o2 and m1 > m2)


def _evolve(batch: _Batch, dim: int, config: SearchConfig, rng, trace: list[float]):
    pop = _normalize(rng.normal(size=(config.population, dim)))
    axes = np.vstack([np.eye(dim), -np.eye(dim)])
    k = min(len(axes), config.population)
    pop[:k] = axes[:k]
    scale = config.mutation_scale
    best = (None, -np.inf, -np.inf)
    stale = 0
    for _ in range(config.generations):
        obj, margin = batch(pop)
        order = _order(obj, margin)
        top = order[0]
        if _better(obj[top], margin[top], best[1], best[2]):
            improved = obj[top] > best[1]
            best = (pop[top].copy(), obj[top], margin[top])
            stale = 0 if improved else stale + 1
        else:
            stale += 1
        trace.append(float(max(best[1], trace[-1] if trace else -np.inf)))
        if stale >= config.window:
            break
        rank = np.empty(len(pop), dtype=int)
        rank[order] = np.arange(len(pop))
        n_child = config.population - config.elitism
        contenders = rng.integers(0, len(pop), size=(2, n_child, config.tournament))
        winners = np.take_along_axis(
            contenders, np.argmin(rank[contenders], axis=2)[..., None], axis=2
        )[..., 0]
        p1, p2 = pop[winners[0]], pop[winners[1]]
        mix = rng.random(n_child) < config.crossover_rate
        lam = rng.random((n_child, 1))
        children = np.where(mix[:, None], _normalize(lam * p1 + (1 - lam) * p2), p1)
        children = _normalize(children + _tangent_noise(rng, children, scale))
        pop = np.vstack([pop[order[: config.elitism]], children])
        scale *= config.mutation_decay
    return best


def _polish(batch: _Batch, eta, obj, margin, steps=(0.2, 0.1, 0.05, 0.02, 0.01, 0.005, 0.002, 0.001)):
    dim = eta.size
    for step in steps:
        for _ in range(50):
            dirs = np.vstack([np.eye(dim), -np.eye(dim)])
            dirs -= (dirs @ eta)[:, None] * eta
            cand = _normalize(eta + step * dirs)
            o, m = batch(cand)
            j = _order(o, m)[0]
            if not _better(o[j], m[j], obj, margin):
                break
            eta, obj, margin = cand[j], o[j], m[j]
    return eta, obj, margin


def learn_policy(spec: ObjectiveSpec, config: SearchConfig | None = None) -> SearchResult:
    """Maximize the empirical objective over unit-norm ``eta``.

    Each restart draws from its own stream seeded by ``(config.seed,
    restart)``; the best candidate over all restarts is polished and
    returned.  ``trace`` holds the best-so-far objective per generation,
    concatenated over restarts.
    """
    config = config or SearchConfig()
    batch = _Batch(spec)
    trace: list[float] = []
    best = (None, -np.inf, -np.inf)
    for r in range(config.restarts):
        rng = np.random.default_rng([config.seed, r])
        cand = _evolve(batch, spec.dim, config, rng, trace)
        if _better(cand[1], cand[2], best[1], best[2]):
            best = cand
    eta, obj, margin = best
    if config.polish:
        eta, obj, margin = _polish(batch, eta, obj, margin)
        if trace:
            trace.append(float(max(obj, trace[-1])))
    policy = LinearPolicy(eta)
    return SearchResult(policy, evaluate_objective(spec, policy.eta), float(margin), trace, batch.calls)


def sphere_grid(dim: int, resolution: float) -> np.ndarray:
    """Unit vectors on an angular grid with step ``resolution`` degrees."""
    step = np.deg2rad(resolution)
    if dim == 1:
        return np.array([[1.0], [-1.0]])
    if dim == 2:
        ang = np.arange(0.0, 2 * np.pi - 1e-12, step)
        return np.column_stack([np.cos(ang), np.sin(ang)])
    if dim == 3:
        theta = np.arange(0.0, np.pi + 1e-12, step)
        phi = np.arange(0.0, 2 * np.pi - 1e-12, step)
        # polar axis on coordinate 0 (the intercept)
        pts = [np.array([[1.0, 0.0, 0.0]])]
        for th in theta[(theta > 0) & (theta < np.pi - 1e-12)]:
            pts.append(np.column_stack([
                np.full(phi.size, np.cos(th)),
                np.sin(th) * np.cos(phi),
                np.sin(th) * np.sin(phi),
            ]))
        pts.append(np.array([[-1.0, 0.0, 0.0]]))
        return np.vstack(pts)
    raise ValidationError(f"grid oracle supports dimension ≤ 3, got {dim}")


def grid_oracle(spec: ObjectiveSpec, resolution: float = 1.0, chunk: int = 2048) -> SearchResult:
    """Exhaustive argmax over :func:`sphere_grid` (dimension ≤ 3 only)."""
    grid = sphere_grid(spec.dim, resolution)
    batch = _Batch(spec)
    best = (None, -np.inf, -np.inf)
    for start in range(0, len(grid), chunk):
        cand = grid[start:start + chunk]
        o, m = batch(cand)
        j = _order(o, m)[0]
        if _better(o[j], m[j], best[1], best[2]):
            best = (cand[j], o[j], m[j])
    policy = LinearPolicy(best[0])
    return SearchResult(policy, evaluate_objective(spec, policy.eta), float(best[2]), [], batch.calls)


def majority_ensemble(policies, x) -> np.ndarray | int:
    """1 where strictly more than half of ``policies`` choose treatment."""
    policies = list(policies)
    if not policies:
        raise ValueError("majority_ensemble needs at least one policy")
    votes = sum(np.asarray(decide(p, x)) for p in policies)
    out = (2 * votes > len(policies)).astype(int)
    return int(out) if np.ndim(out) == 0 else out


def margin_of(spec: ObjectiveSpec, eta) -> float:
    return float(np.mean(np.abs(spec.design @ np.asarray(eta, dtype=float))))
