"""CSV / JSON readers and writers.

Cross-section files have header ``x1,...,xp,a,y,t,z``; panel files
``x1,...,xp,z,a0,y0,a1,y1``.  Any column that is not a role column is a
covariate, kept in file order.
"""
from __future__ import annotations

import csv
import json
import os
import tempfile
from pathlib import Path

import numpy as np

from .core import Dataset, LinearPolicy, PanelDataset, ValidationError

CROSS_ROLES = ("a", "y", "t", "z")
PANEL_ROLES = ("z", "a0", "y0", "a1", "y1")


class SchemaError(ValidationError):
    pass


def atomic_write(path, text: str) -> None:
    """Write via a temporary file in the target directory, then rename."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v: float) -> str:
    v = float(v)
    return str(int(v)) if v.is_integer() and abs(v) < 1e15 else repr(v)


def _table_text(header: list[str], columns: list[np.ndarray]) -> str:
    lines = [",".join(header)]
    for row in zip(*columns):
        lines.append(",".join(_fmt(v) for v in row))
    return "\n".join(lines) + "\n"


def _read_table(path) -> tuple[list[str], np.ndarray]:
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise SchemaError(f"{path}: empty file") from None
        rows = []
        for i, raw in enumerate(reader):
            if not raw:
                continue
            if len(raw) != len(header):
                raise SchemaError(f"row {i}: expected {len(header)} cells, got {len(raw)}")
            try:
                rows.append([float(c) for c in raw])
            except ValueError:
                bad = next(c for c in raw if not _is_float(c))
                raise SchemaError(f"row {i}: cannot parse cell {bad!r}") from None
    if not rows:
        raise SchemaError("n ≥ 1 violated")
    return header, np.array(rows, dtype=float)


def _is_float(c: str) -> bool:
    try:
        float(c)
        return True
    except ValueError:
        return False


def _split(header, table, roles):
    missing = [r for r in roles if r not in header]
    if missing:
        raise SchemaError(f"missing columns: {', '.join(missing)}")
    cov_names = [h for h in header if h not in roles]
    cov = table[:, [header.index(h) for h in cov_names]]
    return cov_names, cov, {r: table[:, header.index(r)] for r in roles}


def read_dataset(path) -> Dataset:
    header, table = _read_table(path)
    names, cov, cols = _split(header, table, CROSS_ROLES)
    return Dataset(cov, cols["a"], cols["y"], cols["t"], cols["z"], tuple(names))


def read_panel(path) -> PanelDataset:
    header, table = _read_table(path)
    names, cov, cols = _split(header, table, PANEL_ROLES)
    return PanelDataset(cov, *(cols[r] for r in PANEL_ROLES), covariate_names=tuple(names))


def read_any(path) -> Dataset | PanelDataset:
    with open(path, encoding="utf-8") as fh:
        header = {h.strip() for h in fh.readline().split(",")}
    return read_panel(path) if {"a0", "a1"} <= header else read_dataset(path)


def write_dataset(data: Dataset | PanelDataset, path) -> None:
    names = list(data.covariate_names[int(data.augmented):])
    cov = [data.covariates[:, j] for j in range(data.p)]
    roles = PANEL_ROLES if isinstance(data, PanelDataset) else CROSS_ROLES
    atomic_write(path, _table_text(names + list(roles), cov + [getattr(data, r) for r in roles]))


def write_columns(path, columns: dict[str, np.ndarray]) -> None:
    atomic_write(path, _table_text(list(columns), [np.asarray(c) for c in columns.values()]))


def read_columns(path) -> dict[str, np.ndarray]:
    header, table = _read_table(path)
    return {h: table[:, j] for j, h in enumerate(header)}


def write_json(path, obj) -> None:
    atomic_write(path, json.dumps(obj, indent=2, sort_keys=True) + "\n")


def policy_to_json(policy: LinearPolicy, objective: float, estimator: str, seed, **extra) -> dict:
    out = {
        "eta": [float(v) for v in policy.eta],
        "objective": float(objective),
        "estimator": estimator,
        "seed": seed,
    }
    if policy.names:
        out["names"] = list(policy.names)
    out.update(extra)
    return out


def read_policy(path) -> LinearPolicy:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    return LinearPolicy(np.asarray(obj["eta"], dtype=float), tuple(obj.get("names", ())))


def write_scores(path, scores) -> None:
    """Score vector as ``unit,score,estimator_tag,form``."""
    lines = ["unit,score,estimator_tag,form"]
    lines += [f"{i},{_fmt(v)},{scores.estimator_tag},{scores.form}" for i, v in enumerate(scores.values)]
    atomic_write(path, "\n".join(lines) + "\n")


def write_trace(path, trace) -> None:
    """Best-so-far objective per generation as ``generation,best_objective``."""
    lines = ["generation,best_objective"] + [f"{g},{_fmt(v)}" for g, v in enumerate(trace)]
    atomic_write(path, "\n".join(lines) + "\n")
