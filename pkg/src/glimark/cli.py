"""Command-line interface.

Subcommands: ``simulate``, ``fit``, ``predict``, ``evaluate``, ``cv``,
``importance`` and ``report``. Runs driven by a YAML config write the fully
resolved config next to their outputs, so any run can be repeated from the
file it left behind.

Failures print one JSON object on stderr and exit with 2 (configuration),
3 (data) or 4 (numerical divergence).
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np
import yaml

from . import __version__, cv, importance, metrics, simulate
from .data import DataSet, fmt, load_manifest, read_csv, save_manifest, write_csv, write_table
from .errors import ConfigError, DataError, GlimarkError
from .glm import Family
from .kernels import BlockMode, KernelSpec, enumerate_views
from .solver import AdamConfig, FitConfig, ModelState, Penalty, fit, predict, predict_mean

OUTPUT_ENV = "GLIMARK_OUTPUT_DIR"
RESOLVED_NAME = "config.resolved.yaml"


# ---------------------------------------------------------------------------
# Run configuration
# ---------------------------------------------------------------------------

_TOP_KEYS = {"data", "manifest", "outcome", "id_column", "family", "kernels", "assignment",
             "fit", "grid", "output_dir", "seed", "threads"}
_FIT_KEYS = {"lambda", "t_max", "tol", "penalty", "standardize", "mode", "inner"}
_INNER_KEYS = {"step_size", "beta1", "beta2", "epsilon", "max_inner_iters", "inner_tol", "precondition"}
_GRID_KEYS = {"lambdas", "t_values", "folds", "metric", "seed", "protocol", "repeats", "test_fraction"}


def _reject_unknown(d: Mapping, allowed: set, prefix: str = "") -> None:
    if not isinstance(d, Mapping):
        raise ConfigError(f"{prefix.rstrip('.') or 'config'} must be a mapping", key=prefix.rstrip(".") or None)
    for k in d:
        if k not in allowed:
            raise ConfigError(f"unknown config key {prefix}{k!r}", key=f"{prefix}{k}")


def _num(value, key: str, kind=float):
    # YAML reads "1e-3" as a string, so numbers are coerced explicitly
    if isinstance(value, bool):
        raise ConfigError(f"{key} must be numeric", key=key)
    try:
        out = kind(float(value)) if kind is int else kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be numeric, got {value!r}", key=key) from None
    if kind is int and float(value) != out:
        raise ConfigError(f"{key} must be an integer, got {value!r}", key=key)
    return out


def _bool(value, key: str) -> bool:
    if isinstance(value, bool):
        return value
    raise ConfigError(f"{key} must be true or false", key=key)


@dataclass
class GridConfig:
    spec: cv.GridSpec
    protocol: str = "kfold"
    repeats: int = 1
    test_fraction: float = 0.5

    def to_dict(self) -> dict:
        return {"lambdas": list(self.spec.lambdas), "t_values": list(self.spec.t_values),
                "folds": self.spec.folds, "metric": self.spec.metric.value, "seed": self.spec.seed,
                "protocol": self.protocol, "repeats": self.repeats, "test_fraction": self.test_fraction}


@dataclass
class RunConfig:
    """Validated contents of a run file."""

    data: Path | None = None
    manifest: Path | None = None
    outcome: str = "y"
    id_column: str | None = None
    family: Family | None = None
    kernels: list[KernelSpec] | None = None
    assignment: dict[str, list[str]] | None = None
    fit: FitConfig | None = None
    grid: GridConfig | None = None
    output_dir: Path | None = None
    seed: int = 0
    threads: int = field(default_factory=lambda: os.cpu_count() or 1)

    @classmethod
    def from_dict(cls, d: Mapping | None, base_dir: Path = Path(".")) -> "RunConfig":
        d = dict(d or {})
        _reject_unknown(d, _TOP_KEYS)

        def path(key):
            v = d.get(key)
            if v is None:
                return None
            p = Path(str(v)).expanduser()
            return p if p.is_absolute() else (base_dir / p)

        family = None
        if d.get("family") is not None:
            try:
                family = Family.parse(d["family"])
            except DataError as e:
                raise ConfigError(str(e), key="family") from None
        kernels = None
        if d.get("kernels") is not None:
            if not isinstance(d["kernels"], list):
                raise ConfigError("kernels must be a list", key="kernels")
            kernels = []
            for k, entry in enumerate(d["kernels"]):
                try:
                    kernels.append(KernelSpec.from_dict(entry))
                except ConfigError as e:
                    raise ConfigError(str(e), key=f"kernels[{k}].{e.key}" if e.key else f"kernels[{k}]") from None
        assignment = None
        if d.get("assignment") is not None:
            if not isinstance(d["assignment"], Mapping):
                raise ConfigError("assignment must map levels to kernel names", key="assignment")
            assignment = {str(k): [str(x) for x in v] for k, v in d["assignment"].items()}
        seed = _num(d.get("seed", 0), "seed", int)
        threads = d.get("threads")
        threads = (os.cpu_count() or 1) if threads is None else _num(threads, "threads", int)
        if threads < 1:
            raise ConfigError("threads must be >= 1", key="threads")
        cfg = cls(data=path("data"), manifest=path("manifest"), outcome=str(d.get("outcome", "y")),
                  id_column=None if d.get("id_column") is None else str(d["id_column"]),
                  family=family, kernels=kernels, assignment=assignment,
                  output_dir=path("output_dir"), seed=seed, threads=threads)
        cfg.fit = cfg._fit_config(d.get("fit") or {})
        if d.get("grid") is not None:
            cfg.grid = cfg._grid_config(d["grid"])
        return cfg

    def _fit_config(self, f: Mapping) -> FitConfig | None:
        _reject_unknown(f, _FIT_KEYS, "fit.")
        inner = f.get("inner") or {}
        _reject_unknown(inner, _INNER_KEYS, "fit.inner.")
        ikw = {}
        for k in _INNER_KEYS & set(inner):
            if k == "precondition":
                ikw[k] = _bool(inner[k], "fit.inner.precondition")
            else:
                ikw[k] = _num(inner[k], f"fit.inner.{k}", int if k == "max_inner_iters" else float)
        try:
            adam = AdamConfig(**ikw)
        except ConfigError as e:
            raise ConfigError(str(e), key=f"fit.{e.key}") from None
        if self.family is None:
            return None
        kw: dict[str, Any] = {"family": self.family, "inner": adam, "threads": self.threads}
        if "lambda" in f:
            kw["lam"] = _num(f["lambda"], "fit.lambda")
        if "t_max" in f:
            kw["t_max"] = _num(f["t_max"], "fit.t_max", int)
        if "tol" in f:
            kw["tol"] = _num(f["tol"], "fit.tol")
        if "standardize" in f:
            kw["standardize"] = _bool(f["standardize"], "fit.standardize")
        if "penalty" in f:
            kw["penalty"] = str(f["penalty"])
        if "mode" in f:
            try:
                kw["mode"] = BlockMode(str(f["mode"]))
            except ValueError:
                raise ConfigError(f"unknown block mode {f['mode']!r}", key="fit.mode") from None
        return FitConfig(**kw)

    def _grid_config(self, g: Mapping) -> GridConfig:
        _reject_unknown(g, _GRID_KEYS, "grid.")
        for k in ("lambdas", "t_values"):
            if not isinstance(g.get(k), list):
                raise ConfigError(f"grid.{k} must be a list", key=f"grid.{k}")
        lambdas = [_num(v, "grid.lambdas") for v in g["lambdas"]]
        t_values = [_num(v, "grid.t_values", int) for v in g["t_values"]]
        default_metric = "auc" if self.family in (None, Family.BINOMIAL) else "rmse"
        spec = cv.GridSpec(lambdas, t_values, folds=_num(g.get("folds", 5), "grid.folds", int),
                           metric=str(g.get("metric", default_metric)),
                           seed=_num(g.get("seed", self.seed), "grid.seed", int))
        protocol = str(g.get("protocol", "kfold"))
        if protocol not in ("kfold", "holdout"):
            raise ConfigError(f"unknown protocol {protocol!r}", key="grid.protocol")
        return GridConfig(spec, protocol, _num(g.get("repeats", 1), "grid.repeats", int),
                          _num(g.get("test_fraction", 0.5), "grid.test_fraction"))

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "data": None if self.data is None else str(self.data.resolve()),
            "manifest": None if self.manifest is None else str(self.manifest.resolve()),
            "outcome": self.outcome,
            "id_column": self.id_column,
            "family": None if self.family is None else self.family.value,
            "kernels": None if self.kernels is None else [k.to_dict() for k in self.kernels],
            "assignment": self.assignment,
            "seed": self.seed,
            "threads": self.threads,
            "output_dir": None if self.output_dir is None else str(self.output_dir.resolve()),
        }
        if self.fit is not None:
            f = self.fit.to_dict()
            f.pop("family")
            out["fit"] = f
        if self.grid is not None:
            out["grid"] = self.grid.to_dict()
        return out

    def require(self, *keys: str) -> None:
        for k in keys:
            if getattr(self, k) is None:
                raise ConfigError(f"config key {k!r} is required for this command", key=k)


def load_run_config(path: str | Path | None, overrides: Mapping | None = None) -> RunConfig:
    raw: dict = {}
    base = Path(".")
    if path is not None:
        path = Path(path)
        try:
            raw = yaml.safe_load(path.read_text()) or {}
        except FileNotFoundError:
            raise ConfigError(f"config file {str(path)!r} not found", key="config") from None
        except yaml.YAMLError as e:
            raise ConfigError(f"{path}: invalid YAML ({e})".replace("\n", " "), key="config") from None
        if not isinstance(raw, dict):
            raise ConfigError("config file must hold a mapping", key="config")
        base = path.parent
    for k, v in (overrides or {}).items():
        if v is None:
            continue
        if "." in k:
            head, tail = k.split(".", 1)
            raw.setdefault(head, {})
            raw[head] = dict(raw[head] or {})
            raw[head][tail] = v
        else:
            raw[k] = v
    return RunConfig.from_dict(raw, base)


def write_resolved(cfg_dict: Mapping, out_dir: Path) -> Path:
    p = out_dir / RESOLVED_NAME
    p.write_text(yaml.safe_dump(dict(cfg_dict), sort_keys=False))
    return p


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------


def _out_dir(arg: str | None, cfg: RunConfig | None = None) -> Path:
    if arg is not None:
        d = Path(arg)
    elif cfg is not None and cfg.output_dir is not None:
        d = cfg.output_dir
    elif os.environ.get(OUTPUT_ENV):
        d = Path(os.environ[OUTPUT_ENV])
    else:
        d = Path(".")
    d.mkdir(parents=True, exist_ok=True)
    return d


def _load_training(cfg: RunConfig):
    cfg.require("data", "manifest", "family")
    manifest, kernels, assignment = load_manifest(cfg.manifest)
    kernels = cfg.kernels or kernels
    assignment = cfg.assignment if cfg.assignment is not None else assignment
    if not kernels:
        raise ConfigError("no kernels given in the config or the manifest", key="kernels")
    data = read_csv(cfg.data, outcome=cfg.outcome, family=cfg.family, manifest=manifest,
                    id_column=cfg.id_column)
    return data, enumerate_views(manifest, kernels, assignment)


def _emit(msg: str) -> None:
    print(msg, file=sys.stdout)


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def cmd_simulate(args) -> int:
    try:
        spec = simulate.ScenarioSpec(args.scenario, n=args.n, seed=args.seed)
        man, kernels, assignment = simulate.scenario_manifest(spec, args.variant)
    except ValueError as e:
        raise ConfigError(str(e), key="variant" if "variant" in str(e) else "n") from None
    out = _out_dir(args.out)
    ds = simulate.generate(spec)
    head = [f"scenario={spec.scenario.value}", f"seed={spec.seed}", f"n={spec.n}",
            f"family={ds.family.value}"]
    write_csv(out / "data.csv", ds.to_dataset(man), comments=head)
    save_manifest(out / "manifest.yaml", man, kernels, assignment, comments=head)
    (out / "truth.json").write_text(json.dumps(ds.truth(), indent=1) + "\n")
    write_resolved({"command": "simulate", "scenario": spec.scenario.value, "n": spec.n,
                    "seed": spec.seed, "variant": args.variant}, out)
    _emit(f"wrote {out / 'data.csv'}, {out / 'manifest.yaml'}, {out / 'truth.json'}")
    return 0


def _fit_overrides(args) -> dict:
    return {"data": args.data, "manifest": args.manifest, "family": args.family,
            "fit.lambda": args.lam, "fit.t_max": args.t_max, "threads": args.threads}


def cmd_fit(args) -> int:
    cfg = load_run_config(args.config, _fit_overrides(args))
    data, views = _load_training(cfg)
    out = _out_dir(args.out, cfg)
    model, trace = fit(data, views, cfg.fit)
    if model.family is Family.BINOMIAL and len(np.unique(data.y)) == 2:
        model.youden_threshold = metrics.youden(predict_mean(model, data), data.y).threshold
    model.save(out / "model.json")
    write_table(out / "trace.csv", trace.header, trace.to_rows())
    write_resolved(cfg.to_dict(), out)
    _emit(f"selected {model.n_selected} columns; stop={trace.stop_reason}; "
          f"objective={fmt(trace.objectives[-1])}")
    return 0


def _read_for_model(model: ModelState, path, outcome: str, id_column: str | None,
                    require_outcome: bool) -> DataSet:
    return read_csv(path, outcome=outcome, family=model.family if require_outcome else None,
                    id_column=id_column, require_outcome=require_outcome)


def cmd_predict(args) -> int:
    model = ModelState.load(args.model)
    data = _read_for_model(model, args.data, args.outcome, args.id_column, require_outcome=False)
    f = predict(model, data)
    mu = np.atleast_1d(predict_mean(model, data))
    header = ["row_id", "f", "mean"]
    binom = model.family is Family.BINOMIAL
    if binom:
        header += ["class_half", "class_youden"]
    rows = []
    for i in range(data.n):
        r = [data.row_ids[i], float(f[i]), float(mu[i])]
        if binom:
            r.append(int(mu[i] > 0.5))
            r.append("" if model.youden_threshold is None else int(mu[i] > model.youden_threshold))
        rows.append(r)
    out = Path(args.out) if args.out else _out_dir(None) / "predictions.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    write_table(out, header, rows)
    _emit(f"wrote {data.n} predictions to {out}")
    return 0


def cmd_evaluate(args) -> int:
    model = ModelState.load(args.model)
    data = _read_for_model(model, args.data, args.outcome, args.id_column, require_outcome=True)
    mu = np.atleast_1d(predict_mean(model, data))
    out = _out_dir(args.out)
    if model.family is Family.BINOMIAL:
        s = metrics.summarize(mu, data.y)
        res = {"auc": s.auc, "youden_threshold": s.youden_threshold, "youden_j": s.youden_j,
               "accuracy_youden": s.accuracy_at_j, "accuracy_half": s.accuracy_at_half,
               "f_score": s.f_score}
        if model.youden_threshold is not None:
            res["stored_threshold"] = model.youden_threshold
            res["accuracy_stored_threshold"] = metrics.accuracy(mu, data.y, model.youden_threshold)
        metrics.roc_curve(mu, data.y).to_csv(out / "roc.csv")
    else:
        res = {"rmse": metrics.rmse(mu, data.y)}
    res["n"] = data.n
    (out / "metrics.json").write_text(json.dumps(res, indent=1) + "\n")
    _emit(" ".join(f"{k}={fmt(v) if isinstance(v, float) else v}" for k, v in res.items()))
    return 0


def cmd_cv(args) -> int:
    cfg = load_run_config(args.config, _fit_overrides(args))
    cfg.require("grid")
    data, views = _load_training(cfg)
    out = _out_dir(args.out, cfg)
    g = cfg.grid
    g.spec.check(cfg.family)
    splits = None
    if g.protocol == "holdout":
        splits = cv.holdout_splits(data.n, g.repeats, g.test_fraction, g.spec.seed, y=data.y,
                                   stratify=cfg.family is Family.BINOMIAL)
    res = cv.grid_search(data, views, g.spec, cfg.fit, splits=splits, threads=cfg.threads)
    res.to_csv(out / "grid.csv")
    summary = []
    for m in res.values:
        M, S = res.mean(m), res.std(m)
        for i, lam in enumerate(res.lambdas):
            for j, t in enumerate(res.t_values):
                summary.append([lam, t, m.value, float(M[i, j]), float(S[i, j])])
    write_table(out / "grid_summary.csv", ["lambda", "T", "metric", "mean", "std"], summary)
    lam, t, val = res.best()
    best = {"metric": res.metric.value, "lambda": lam, "T": t, "mean": val, "folds": res.n_folds}
    (out / "best.json").write_text(json.dumps(best, indent=1) + "\n")
    write_resolved(cfg.to_dict(), out)
    _emit(f"best {res.metric.value}={fmt(val)} at lambda={fmt(lam)} T={t}")
    return 0


def _rollup(args):
    return load_manifest(args.manifest)[0] if getattr(args, "manifest", None) else None


def cmd_importance(args) -> int:
    model = ModelState.load(args.model)
    try:
        axis = importance.Axis(args.axis)
    except ValueError:
        raise ConfigError(f"unknown axis {args.axis!r}", key="axis") from None
    rep = importance.aggregate(model, axis, _rollup(args))
    out = Path(args.out) if args.out else _out_dir(None) / f"importance_{axis.value}.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    rep.to_csv(out)
    sys.stdout.write(rep.format_table())
    return 0


def cmd_report(args) -> int:
    model = ModelState.load(args.model)
    out = _out_dir(args.out)
    rollup = _rollup(args)
    for axis in importance.Axis:
        importance.aggregate(model, axis, rollup).to_csv(out / f"importance_{axis.value}.csv")
    header, rows = importance.representers_table(importance.top_representers(model, args.top))
    write_table(out / "representers.csv", header, rows)
    summary: dict[str, Any] = {"n_selected": model.n_selected, "l1_norm": float(np.abs(model.alpha).sum()),
                               "intercept": model.b}
    if model.family is Family.BINOMIAL and model.n_selected:
        summary["sign_agreement"] = importance.sign_agreement(model)
    (out / "summary.json").write_text(json.dumps(summary, indent=1) + "\n")
    sys.stdout.write(importance.aggregate(model, importance.Axis.GROUP, rollup).format_table())
    return 0


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message, key="argv")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="glimark", description="Greedy multiple-kernel learning for GLMs.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="generate a benchmark scenario")
    s.add_argument("--scenario", required=True, choices=[x.value for x in simulate.Scenario])
    s.add_argument("--n", type=int, default=400)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--variant", default=None, help="kernel architecture variant (e.g. linear, poly, rbf)")
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_simulate)

    def run_args(q):
        q.add_argument("--config", default=None, help="YAML run configuration")
        q.add_argument("--data", default=None)
        q.add_argument("--manifest", default=None)
        q.add_argument("--family", default=None)
        q.add_argument("--lambda", dest="lam", type=float, default=None)
        q.add_argument("--t-max", dest="t_max", type=int, default=None)
        q.add_argument("--threads", type=int, default=None,
                       help="worker threads for screening and CV cells (default: all cores)")
        q.add_argument("--out", default=None)

    f = sub.add_parser("fit", help="fit a model")
    run_args(f)
    f.set_defaults(func=cmd_fit)

    c = sub.add_parser("cv", help="cross-validated (lambda, T) grid search")
    run_args(c)
    c.set_defaults(func=cmd_cv)

    for name, func, helptext in (("predict", cmd_predict, "predict from a saved model"),
                                 ("evaluate", cmd_evaluate, "score a saved model on labelled data")):
        q = sub.add_parser(name, help=helptext)
        q.add_argument("--model", required=True)
        q.add_argument("--data", required=True)
        q.add_argument("--outcome", default="y")
        q.add_argument("--id-column", dest="id_column", default=None)
        q.add_argument("--out", default=None)
        q.set_defaults(func=func)

    i = sub.add_parser("importance", help="coefficient-mass report along one axis")
    i.add_argument("--model", required=True)
    i.add_argument("--axis", default="group", help="view, group, kernel, patient or group_kernel")
    i.add_argument("--manifest", default=None, help="manifest used to roll individual features up")
    i.add_argument("--out", default=None)
    i.set_defaults(func=cmd_importance)

    r = sub.add_parser("report", help="write all importance tables and top representers")
    r.add_argument("--model", required=True)
    r.add_argument("--manifest", default=None)
    r.add_argument("--top", type=int, default=10)
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_report)
    return p


def _fail(exc: BaseException, code: int, kind: str, key=None) -> int:
    payload = {"error": kind, "message": " ".join(str(exc).split())}
    if key is not None:
        payload["key"] = key
    if getattr(exc, "iteration", None) is not None:
        payload["iteration"] = exc.iteration
    print(json.dumps(payload), file=sys.stderr)
    return code


def main(argv: Sequence[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except GlimarkError as e:
        return _fail(e, e.exit_code, e.kind, getattr(e, "key", None))
    except FileNotFoundError as e:
        return _fail(e, 3, "io", e.filename)
    except OSError as e:
        return _fail(e, 3, "io", getattr(e, "filename", None))


if __name__ == "__main__":
    sys.exit(main())
