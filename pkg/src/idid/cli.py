"""Command-line interface: ``idid simulate | learn | evaluate | benchmark | panel-learn``.

Every option has a default; a JSON ``--config`` file with flat keys (flag
names with ``_`` for ``-``) overrides the defaults, and explicit flags
override the file.  Exit codes: 0 success, 1 runtime failure, 2 usage or
validation error.
"""
from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import io
from .core import LinearPolicy, PanelDataset, ValidationError, check, decide, standardize
from .inference import variance_plugin
from .nuisance import NuisanceError, crossfit, fit_nonparametric, fit_panel, fit_parametric
from .policy import ObjectiveSpec, SearchConfig, learn_policy
from .scores import ESTIMATORS, PANEL_ESTIMATORS, build_scores, score_eif_delta
from .simulation import SCENARIOS, Scenario, pcd, run_benchmark, simulate

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2

# Variable mapping for the labour-survey application: the data are not
# shipped, so this only documents how a prepared CSV should be laid out.
ATTITUDE_IV_CONFIG = {
    "_columns": {
        "x": ["born_australia", "married", "uni_mem", "gov_emp", "age", "year_expe"],
        "a": "year_edu, dichotomized by the analyst (1 = more education)",
        "y": "wage_hour",
        "t": "survey wave (0 = 1984, 1 = 1985)",
        "z": "attitude index over six questions, dichotomized by the analyst",
    },
    "estimator": "mr1",
    "fitter": "parametric",
    "standardize": True,
}

_SEARCH_KEYS = ("population", "generations", "restarts")

DEFAULTS = {
    "simulate": {
        "scenario": "main", "n": 5000, "seed": 0, "panel": False, "truth": None, "out": "data.csv",
    },
    "learn": {
        "in": None, "estimator": "mr1", "fitter": "parametric", "crossfit": False, "folds": 4,
        "trim_eps": 0.01, "delta_floor": 0.05, "ci": False, "alpha": 0.05, "seed": 0,
        "standardize": False, "population": 60, "generations": 150, "restarts": 5,
        "trace": None, "out": "policy.json",
    },
    "evaluate": {
        "policy": None, "in": None, "truth": None, "pcd": False, "fitter": "parametric",
        "folds": 4, "trim_eps": 0.01, "delta_floor": 0.05, "seed": 0, "out": None,
    },
    "benchmark": {
        "scenario": "main", "estimators": ",".join(ESTIMATORS), "replications": 100, "n": 5000,
        "fitter": "parametric", "folds": 4, "test_size": 100_000, "seed": 0,
        "population": 60, "generations": 150, "restarts": 5, "jobs": None, "out": "benchmark",
    },
    "panel-learn": {
        "in": None, "estimator": "panel_eif", "fitter": "parametric", "crossfit": False, "folds": 4,
        "trim_eps": 0.01, "delta_floor": 0.05, "ci": False, "alpha": 0.05, "seed": 0,
        "population": 60, "generations": 150, "restarts": 5, "out": "policy.json",
    },
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with flat keys mirroring the flags")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--quiet", action="store_true", default=None)


def _search(p):
    p.add_argument("--population", type=int)
    p.add_argument("--generations", type=int)
    p.add_argument("--restarts", type=int)


def _fit(p, estimators):
    p.add_argument("--in", dest="in")
    p.add_argument("--estimator", help=f"one of {', '.join(estimators)}")
    p.add_argument("--fitter", help="parametric or nonparametric")
    p.add_argument("--crossfit", action=argparse.BooleanOptionalAction)
    p.add_argument("--folds", type=int)
    p.add_argument("--trim-eps", type=float)
    p.add_argument("--delta-floor", type=float)
    p.add_argument("--ci", action=argparse.BooleanOptionalAction)
    p.add_argument("--alpha", type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="idid", description="Instrumented DiD policy learning")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("simulate", help="write a simulated dataset")
    _common(p)
    p.add_argument("--scenario")
    p.add_argument("--n", type=int)
    p.add_argument("--panel", action=argparse.BooleanOptionalAction)
    p.add_argument("--truth", help="sidecar CSV for latent variables")

    p = sub.add_parser("learn", help="learn a policy from a cross-section CSV")
    _common(p)
    _fit(p, ESTIMATORS + ("mr",))
    _search(p)
    p.add_argument("--trace", help="CSV path for the best-so-far objective per generation")
    p.add_argument("--standardize", action=argparse.BooleanOptionalAction)
    p.add_argument("--attitude-iv", action="store_true",
                   help="use the labour-survey example config as the base layer")

    p = sub.add_parser("evaluate", help="PCD (with truth sidecar) or estimated value of a policy")
    _common(p)
    p.add_argument("--policy")
    p.add_argument("--in", dest="in")
    p.add_argument("--truth")
    p.add_argument("--pcd", action="store_true", default=None)
    p.add_argument("--fitter")
    p.add_argument("--folds", type=int)
    p.add_argument("--trim-eps", type=float)
    p.add_argument("--delta-floor", type=float)

    p = sub.add_parser("benchmark", help="Monte Carlo PCD comparison")
    _common(p)
    p.add_argument("--scenario")
    p.add_argument("--estimators", help="comma separated estimator tags")
    p.add_argument("--replications", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--fitter")
    p.add_argument("--folds", type=int)
    p.add_argument("--test-size", type=int)
    p.add_argument("--jobs", type=int)
    _search(p)

    p = sub.add_parser("panel-learn", help="learn a policy from a panel CSV")
    _common(p)
    _fit(p, PANEL_ESTIMATORS)
    _search(p)
    return parser


def resolve(command: str, flags: dict, config: dict | None = None) -> dict:
    """Merge defaults < config file < flags for one command."""
    out = dict(DEFAULTS[command])
    for source in (config or {}, flags):
        for key, value in source.items():
            if key.startswith("_") or value is None:
                continue
            key = key.replace("-", "_")
            if key not in out:
                raise ValidationError(f"unknown option {key!r} for {command}")
            out[key] = value
    return out


def _load_config(path) -> dict:
    try:
        with open(path, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except json.JSONDecodeError as err:
        raise ValidationError(f"config {path}: {err}") from None
    if not isinstance(cfg, dict):
        raise ValidationError(f"config {path}: expected a JSON object")
    return cfg


def _log(cfg, msg):
    if not cfg.get("quiet"):
        print(msg, file=sys.stderr)


def _search_config(cfg) -> SearchConfig:
    return SearchConfig(seed=cfg["seed"], **{k: cfg[k] for k in _SEARCH_KEYS})


def _predictions(data, cfg, force_crossfit=False):
    """Nuisance predictions on the training units, cross-fitted if asked or required."""
    fitter = cfg["fitter"]
    if fitter not in ("parametric", "nonparametric"):
        raise ValidationError(f"unknown fitter {fitter!r}; valid: parametric, nonparametric")
    use_cf = force_crossfit or cfg.get("crossfit") or fitter == "nonparametric"
    kw = {"trim_eps": cfg["trim_eps"], "delta_floor": cfg["delta_floor"]}
    if use_cf:
        return crossfit(data, cfg["folds"], fitter, seed=cfg["seed"], **kw).predict(data.covariates), True
    if isinstance(data, PanelDataset):
        return fit_panel(data, fitter, **kw).predict(data.covariates), False
    if fitter == "parametric":
        return fit_parametric(data, **kw).predict(data.covariates), False
    return fit_nonparametric(data, **kw).predict(data.covariates), False


def _learn(cfg, panel: bool) -> dict:
    valid = PANEL_ESTIMATORS if panel else ESTIMATORS + ("mr",)
    est = cfg["estimator"]
    if est not in valid:
        raise ValidationError(f"unknown estimator {est!r}; valid: {', '.join(valid)}")
    if cfg["in"] is None:
        raise ValidationError("--in is required")
    cross_fitted = cfg["crossfit"] or cfg["fitter"] == "nonparametric"
    inference_ok = est in ("mr1", "mr2", "mr", "panel_eif")
    if cfg["ci"] and not (cross_fitted and inference_ok):
        raise ValidationError("ci requires cross-fitted Δ scores (estimator mr1, mr2 or panel_eif "
                              "with --crossfit or a nonparametric fitter)")
    data = io.read_panel(cfg["in"]) if panel else io.read_dataset(cfg["in"])
    check(data)
    if cfg.get("standardize"):
        data = standardize(data)
    pred, _ = _predictions(data, cfg)
    scores = build_scores(est, pred, data)
    res = learn_policy(ObjectiveSpec.from_data(scores, data), _search_config(cfg))
    if cfg.get("trace"):
        io.write_trace(cfg["trace"], res.trace)
    names = ("intercept",) + tuple(data.covariate_names[int(data.augmented):])
    policy = LinearPolicy(res.policy.eta, names)
    extra = {"fitter": cfg["fitter"], "crossfit": bool(cross_fitted), "trim_counts": scores.trim_counts}
    if cfg["ci"]:
        delta = scores if est == "panel_eif" else score_eif_delta(pred, data)
        extra["inference"] = variance_plugin(delta, policy, data.design, cfg["alpha"]).to_json()
    return io.policy_to_json(policy, res.objective, est, cfg["seed"], **extra)


def cmd_simulate(cfg) -> int:
    if cfg["scenario"] not in SCENARIOS:
        raise ValidationError(f"unknown scenario {cfg['scenario']!r}; valid scenarios: {', '.join(SCENARIOS)}")
    if cfg["n"] < 1:
        raise ValidationError("n ≥ 1 violated")
    data, truth = simulate(Scenario(cfg["scenario"], cfg["n"], cfg["seed"], bool(cfg["panel"])))
    io.write_dataset(data, cfg["out"])
    if cfg["truth"]:
        io.write_columns(cfg["truth"], {"u0": truth.u0, "u1": truth.u1, "a0": truth.a0, "a1": truth.a1})
    _log(cfg, f"wrote {data.n} rows to {cfg['out']}")
    return EXIT_OK


def cmd_learn(cfg) -> int:
    out = _learn(cfg, panel=False)
    io.write_json(cfg["out"], out)
    _log(cfg, f"eta = {np.round(out['eta'], 4).tolist()}, objective = {out['objective']:.4f}")
    return EXIT_OK


def cmd_panel_learn(cfg) -> int:
    out = _learn(cfg, panel=True)
    io.write_json(cfg["out"], out)
    _log(cfg, f"eta = {np.round(out['eta'], 4).tolist()}, objective = {out['objective']:.4f}")
    return EXIT_OK


def cmd_evaluate(cfg) -> int:
    if cfg["policy"] is None or cfg["in"] is None:
        raise ValidationError("--policy and --in are required")
    if cfg["pcd"] and not cfg["truth"]:
        raise ValidationError("--pcd needs a --truth sidecar")
    policy = io.read_policy(cfg["policy"])
    data = io.read_any(cfg["in"])
    if policy.dim != data.p + 1:
        raise ValidationError(f"dimension mismatch: policy has {policy.dim}, data has {data.p + 1}")
    result = {"n": data.n, "treated_fraction": float(np.mean(decide(policy, data.design)))}
    if cfg["truth"]:
        truth = io.read_columns(cfg["truth"])
        if len(next(iter(truth.values()))) != data.n:
            raise ValidationError("truth sidecar and data have different numbers of rows")
        if data.p != 2:
            raise ValidationError("PCD is defined for the simulated two-covariate design")
        result["pcd"] = pcd(policy, data)
    else:
        pred, _ = _predictions(data, {**cfg, "crossfit": True}, force_crossfit=True)
        est = "panel_eif" if isinstance(data, PanelDataset) else "mr"
        scores = build_scores(est, pred, data)
        result.update(variance_plugin(scores, policy, data.design).to_json())
    text = json.dumps(result, indent=2, sort_keys=True) + "\n"
    if cfg["out"]:
        io.atomic_write(cfg["out"], text)
    if not cfg.get("quiet") or not cfg["out"]:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_benchmark(cfg) -> int:
    if cfg["scenario"] not in SCENARIOS:
        raise ValidationError(f"unknown scenario {cfg['scenario']!r}; valid scenarios: {', '.join(SCENARIOS)}")
    ests = cfg["estimators"]
    ests = tuple(e.strip() for e in (ests.split(",") if isinstance(ests, str) else ests) if e.strip())
    unknown = [e for e in ests if e not in ESTIMATORS]
    if unknown or not ests:
        raise ValidationError(f"unknown estimators {unknown}; valid: {', '.join(ESTIMATORS)}")
    if cfg["replications"] < 1:
        raise ValidationError("replications ≥ 1 required")
    report = run_benchmark(
        cfg["scenario"], ests, cfg["replications"], cfg["fitter"], cfg["test_size"], cfg["n"],
        cfg["seed"], cfg["folds"], _search_config({**cfg, "seed": 0}), n_jobs=cfg["jobs"],
    )
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    rows = report.rows()
    cols = ["replicate", "estimator", "pcd", "n", "scenario", "seed"]
    lines = [",".join(cols)] + [",".join(str(r[c]) for c in cols) for r in rows]
    io.atomic_write(out / "pcd.csv", "\n".join(lines) + "\n")
    io.write_json(out / "summary.json", report.summary())
    _log(cfg, f"{len(rows)} rows; ordering check: {report.summary()['ordering_check']}")
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "learn": cmd_learn,
    "evaluate": cmd_evaluate,
    "benchmark": cmd_benchmark,
    "panel-learn": cmd_panel_learn,
}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        flags = {k: v for k, v in vars(args).items() if k not in ("command", "config", "attitude_iv")}
        config = {}
        if getattr(args, "attitude_iv", False):
            config.update(ATTITUDE_IV_CONFIG)
        if args.config:
            config.update(_load_config(args.config))
        quiet = flags.pop("quiet", None) or config.pop("quiet", False)
        cfg = resolve(args.command, flags, config)
        cfg["quiet"] = bool(quiet)
        return COMMANDS[args.command](cfg)
    except (UsageError, ValidationError, TypeError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_USAGE
    except (NuisanceError, OSError, ValueError, np.linalg.LinAlgError) as err:
        print(f"error: {err}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
