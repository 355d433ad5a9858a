"""Datasets, partition-manifest files, and feature standardisation."""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import yaml

from .errors import ConfigError, DataError
from .glm import Family, check_outcome
from .kernels import KernelSpec, PartitionManifest


@dataclass
class DataSet:
    """Feature matrix with named columns, optional outcome and manifest."""

    X: np.ndarray
    columns: list[str]
    y: np.ndarray | None = None
    family: Family | None = None
    manifest: PartitionManifest | None = None
    row_ids: list = field(default_factory=list)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        if self.X.ndim != 2:
            raise DataError("feature matrix must be two-dimensional")
        if self.X.shape[1] != len(self.columns):
            raise DataError(f"{len(self.columns)} column names for {self.X.shape[1]} columns")
        if len(set(self.columns)) != len(self.columns):
            raise DataError("duplicate feature names")
        if not self.row_ids:
            self.row_ids = list(range(self.X.shape[0]))
        elif len(self.row_ids) != self.X.shape[0]:
            raise DataError("row id count does not match row count")
        if self.family is not None:
            self.family = Family.parse(self.family)
        if self.y is not None:
            self.y = np.asarray(self.y, dtype=float)
            if self.y.shape != (self.X.shape[0],):
                raise DataError("outcome length does not match row count")
            if self.family is not None:
                check_outcome(self.family, self.y)
        if self.manifest is not None:
            self.manifest.check_features(self.columns)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    def subset(self, rows) -> "DataSet":
        rows = np.asarray(rows, dtype=int)
        return replace(self, X=self.X[rows], y=None if self.y is None else self.y[rows],
                       row_ids=[self.row_ids[i] for i in rows])

    def select_columns(self, names: Sequence[str]) -> np.ndarray:
        pos = {c: i for i, c in enumerate(self.columns)}
        missing = [c for c in names if c not in pos]
        if missing:
            raise DataError(f"missing feature column {missing[0]!r}")
        return self.X[:, [pos[c] for c in names]]


@dataclass(frozen=True)
class Standardizer:
    """Per-feature centring and scaling fitted on training rows."""

    columns: tuple[str, ...]
    means: np.ndarray
    sds: np.ndarray

    @classmethod
    def fit(cls, X: np.ndarray, columns: Sequence[str], enabled: bool = True) -> "Standardizer":
        X = np.asarray(X, dtype=float)
        d = X.shape[1]
        if not enabled:
            return cls(tuple(columns), np.zeros(d), np.ones(d))
        means = X.mean(axis=0)
        sds = X.std(axis=0)
        # constant columns pass through centred but unscaled
        sds = np.where(sds > 0, sds, 1.0)
        return cls(tuple(columns), means, sds)

    @classmethod
    def identity(cls, columns: Sequence[str]) -> "Standardizer":
        d = len(columns)
        return cls(tuple(columns), np.zeros(d), np.ones(d))

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=float) - self.means) / self.sds

    def to_dict(self) -> dict:
        return {"columns": list(self.columns), "means": [float(v) for v in self.means],
                "sds": [float(v) for v in self.sds]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "Standardizer":
        return cls(tuple(d["columns"]), np.asarray(d["means"], dtype=float),
                   np.asarray(d["sds"], dtype=float))


def fmt(x) -> str:
    """Shortest round-tripping text for a number."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def read_csv(path, outcome: str | None = "y", family: Family | str | None = None,
             manifest: PartitionManifest | None = None, id_column: str | None = None,
             require_outcome: bool = True) -> DataSet:
    """Read a header-first CSV; leading ``#`` lines are treated as comments."""
    text = Path(path).read_text()
    lines = [ln for ln in text.splitlines() if not ln.startswith("#")]
    reader = csv.reader(io.StringIO("\n".join(lines)))
    try:
        header = next(reader)
    except StopIteration:
        raise DataError(f"{path}: empty file") from None
    header = [h.strip() for h in header]
    rows = [r for r in reader if r]
    if outcome is not None and outcome not in header:
        if require_outcome:
            raise DataError(f"{path}: outcome column {outcome!r} not found")
        outcome = None
    if id_column is not None and id_column not in header:
        raise DataError(f"{path}: id column {id_column!r} not found")
    feature_cols = [h for h in header if h not in (outcome, id_column)]
    pos = {h: i for i, h in enumerate(header)}
    try:
        table = np.array([[float(r[pos[c]]) for c in feature_cols] for r in rows], dtype=float)
        y = (np.array([float(r[pos[outcome]]) for r in rows], dtype=float)
             if outcome is not None else None)
    except (ValueError, IndexError) as e:
        raise DataError(f"{path}: unparseable value ({e})") from None
    if table.size == 0:
        table = table.reshape(len(rows), len(feature_cols))
    ids = [r[pos[id_column]] for r in rows] if id_column is not None else []
    return DataSet(table, feature_cols, y=y, family=family, manifest=manifest, row_ids=ids)


def write_csv(path, data: DataSet, outcome: str = "y", comments: Sequence[str] = ()) -> None:
    buf = io.StringIO()
    for c in comments:
        buf.write(f"# {c}\n")
    w = csv.writer(buf, lineterminator="\n")
    header = list(data.columns) + ([outcome] if data.y is not None else [])
    w.writerow(header)
    for i in range(data.n):
        row = [fmt(v) for v in data.X[i]]
        if data.y is not None:
            yi = data.y[i]
            row.append(fmt(int(yi)) if float(yi).is_integer() else fmt(yi))
        w.writerow(row)
    Path(path).write_text(buf.getvalue())


def write_table(path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([fmt(v) if isinstance(v, (float, int, np.floating, np.integer))
                    and not isinstance(v, bool) else v for v in r])
    Path(path).write_text(buf.getvalue())


def read_table(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# ---------------------------------------------------------------------------
# Manifest files
# ---------------------------------------------------------------------------

_MANIFEST_KEYS = {"levels", "groups", "kernels", "assignment"}
_GROUP_KEYS = {"label", "level", "features", "parent"}


def manifest_from_dict(d: Mapping):
    """Parse a manifest mapping into ``(manifest, kernels, assignment)``.

    ``kernels`` and ``assignment`` are ``None`` when the file omits them.
    """
    if not isinstance(d, Mapping):
        raise ConfigError("manifest must be a mapping")
    unknown = set(d) - _MANIFEST_KEYS
    if unknown:
        raise ConfigError(f"unknown manifest key {sorted(unknown)[0]!r}", key=sorted(unknown)[0])
    levels = [str(x) for x in d.get("levels") or []]
    if not levels:
        raise ConfigError("manifest declares no levels", key="levels")
    groups: dict[str, list[str]] = {}
    level_of: dict[str, int] = {}
    parent: dict[str, str] = {}
    for k, g in enumerate(d.get("groups") or []):
        bad = set(g) - _GROUP_KEYS
        if bad:
            raise ConfigError(f"unknown group key {sorted(bad)[0]!r}", key=f"groups[{k}].{sorted(bad)[0]}")
        label = str(g.get("label", ""))
        if not label or label in groups:
            raise ConfigError(f"group {k} has a missing or duplicate label", key=f"groups[{k}].label")
        lv = str(g.get("level", levels[0]))
        if lv not in levels:
            raise ConfigError(f"group {label!r} uses undeclared level {lv!r}", key=f"groups[{k}].level")
        groups[label] = [str(f) for f in g.get("features") or []]
        level_of[label] = levels.index(lv)
        if g.get("parent") is not None:
            parent[label] = str(g["parent"])
    if not groups:
        raise ConfigError("manifest declares no groups", key="groups")
    manifest = PartitionManifest(levels, groups, level_of, parent)
    kernels = None
    if d.get("kernels") is not None:
        kernels = [KernelSpec.from_dict(k) for k in d["kernels"]]
    assignment = None
    if d.get("assignment") is not None:
        assignment = {str(k): [str(x) for x in v] for k, v in d["assignment"].items()}
    return manifest, kernels, assignment


def manifest_to_dict(manifest: PartitionManifest, kernels: Sequence[KernelSpec] | None = None,
                     assignment: Mapping[str, Sequence] | None = None) -> dict:
    out: dict = {"levels": list(manifest.levels), "groups": []}
    for g, feats in manifest.groups.items():
        e = {"label": g, "level": manifest.levels[manifest.level_of[g]], "features": list(feats)}
        if g in manifest.parent:
            e["parent"] = manifest.parent[g]
        out["groups"].append(e)
    if kernels is not None:
        out["kernels"] = [k.to_dict() for k in kernels]
    if assignment is not None:
        out["assignment"] = {lv: [k.label if isinstance(k, KernelSpec) else str(k) for k in ks]
                             for lv, ks in assignment.items()}
    return out


def load_manifest(path):
    try:
        d = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as e:
        raise ConfigError(f"{path}: invalid YAML ({e})", key="manifest") from None
    return manifest_from_dict(d)


def save_manifest(path, manifest, kernels=None, assignment=None, comments: Sequence[str] = ()) -> None:
    body = yaml.safe_dump(manifest_to_dict(manifest, kernels, assignment), sort_keys=False)
    head = "".join(f"# {c}\n" for c in comments)
    Path(path).write_text(head + body)
