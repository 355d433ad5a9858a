"""Cross-validation and (lambda, T) grid search.

Greedy selection is strictly incremental, so a single fit to the largest
``T`` yields every smaller model as a prefix of its trace. The grid search
therefore runs one fit per (lambda, fold) and scores each requested ``T``
with the prefix model recorded at that iteration.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import metrics
from .data import DataSet, write_table
from .errors import ConfigError, FoldError
from .glm import Family
from .kernels import ViewSpec
from .solver import FitConfig, ModelState, fit_prepared, predict_mean, prefix_model, prepare


class Metric(str, enum.Enum):
    AUC = "auc"
    ACCURACY_YOUDEN = "accuracy_youden"
    ACCURACY_HALF = "accuracy_half"
    F_SCORE = "f_score"
    RMSE = "rmse"

    @property
    def higher_is_better(self) -> bool:
        return self is not Metric.RMSE

    def compatible(self, family: Family) -> bool:
        return (self is Metric.RMSE) == (family is not Family.BINOMIAL)


def metrics_for(family: Family) -> list[Metric]:
    return [m for m in Metric if m.compatible(family)]


def score(metric: Metric, means: np.ndarray, y: np.ndarray) -> float:
    metric = Metric(metric)
    if metric is Metric.RMSE:
        return metrics.rmse(means, y)
    if metric is Metric.AUC:
        return metrics.auc(means, y)
    if metric is Metric.ACCURACY_YOUDEN:
        return metrics.youden(means, y).accuracy
    if metric is Metric.ACCURACY_HALF:
        return metrics.accuracy(means, y, 0.5)
    return metrics.f_score(means, y, metrics.youden(means, y).threshold)


@dataclass(frozen=True)
class GridSpec:
    lambdas: tuple[float, ...]
    t_values: tuple[int, ...]
    folds: int = 5
    metric: Metric = Metric.AUC
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "lambdas", tuple(float(v) for v in self.lambdas))
        object.__setattr__(self, "t_values", tuple(int(v) for v in self.t_values))
        try:
            object.__setattr__(self, "metric", Metric(self.metric))
        except ValueError:
            raise ConfigError(f"unknown metric {self.metric!r}", key="grid.metric") from None
        if not self.lambdas or any(not (lam > 0 and np.isfinite(lam)) for lam in self.lambdas):
            raise ConfigError("lambdas must be a non-empty list of positive numbers", key="grid.lambdas")
        if not self.t_values or any(t < 1 for t in self.t_values) or list(self.t_values) != sorted(set(self.t_values)):
            raise ConfigError("t_values must be sorted, distinct positive integers", key="grid.t_values")
        if self.folds < 2:
            raise ConfigError("folds must be >= 2", key="grid.folds")

    def check(self, family: Family, t_max: int | None = None) -> None:
        if not self.metric.compatible(family):
            raise ConfigError(f"metric {self.metric.value} does not suit the {family.value} family",
                              key="grid.metric")
        if t_max is not None and self.t_values[-1] > t_max:
            raise ConfigError(f"t_values exceed t_max={t_max}", key="grid.t_values")


def _assign_round_robin(order: np.ndarray, folds: int) -> list[np.ndarray]:
    return [np.sort(order[k::folds]) for k in range(folds)]


def kfold_split(n: int, folds: int, seed: int = 0, y=None,
                stratify: bool = False) -> list[tuple[np.ndarray, np.ndarray]]:
    """Shuffled k-fold partition; fold sizes differ by at most one.

    With ``stratify`` the shuffled positives are dealt out first and the
    negatives continue the same round-robin, so every validation fold gets
    both classes whenever each class has at least ``folds`` members.
    """
    if folds < 2:
        raise FoldError("need at least 2 folds")
    if folds > n:
        raise FoldError(f"{folds} folds for {n} rows")
    rng = np.random.default_rng(np.random.SeedSequence([seed, n, folds]))
    if stratify:
        if y is None:
            raise FoldError("stratified folds need the outcome")
        y = np.asarray(y)
        pos = np.flatnonzero(y == 1)
        neg = np.flatnonzero(y != 1)
        if min(pos.size, neg.size) < folds:
            raise FoldError(f"cannot stratify {pos.size} positives and {neg.size} negatives "
                            f"into {folds} folds")
        order = np.concatenate([rng.permutation(pos), rng.permutation(neg)])
    else:
        order = rng.permutation(n)
    val = _assign_round_robin(order, folds)
    everything = np.arange(n)
    return [(np.setdiff1d(everything, v), v) for v in val]


def holdout_splits(n: int, repeats: int, test_fraction: float, seed: int = 0, y=None,
                   stratify: bool = False) -> list[tuple[np.ndarray, np.ndarray]]:
    """Repeated random train/test splits."""
    if not 0 < test_fraction < 1:
        raise FoldError("test_fraction must lie in (0, 1)")
    n_test = int(round(test_fraction * n))
    if not 0 < n_test < n:
        raise FoldError(f"test fraction {test_fraction} leaves an empty side for n={n}")
    out = []
    for r in range(repeats):
        rng = np.random.default_rng(np.random.SeedSequence([seed, n, 7919, r]))
        if stratify:
            y = np.asarray(y)
            test = []
            for cls in (1, 0):
                idx = np.flatnonzero((y == 1) == bool(cls))
                k = int(round(test_fraction * idx.size))
                if k == 0 or k == idx.size:
                    raise FoldError("holdout split would drop a class from one side")
                test.append(rng.choice(idx, size=k, replace=False))
            test = np.sort(np.concatenate(test))
        else:
            test = np.sort(rng.choice(n, size=n_test, replace=False))
        out.append((np.setdiff1d(np.arange(n), test), test))
    return out


@dataclass
class GridResult:
    lambdas: tuple[float, ...]
    t_values: tuple[int, ...]
    metric: Metric
    # metric -> array of shape (n_lambdas, n_t, n_folds)
    values: dict[Metric, np.ndarray] = field(default_factory=dict)

    @property
    def n_folds(self) -> int:
        return self.values[self.metric].shape[2]

    def mean(self, metric: Metric | None = None) -> np.ndarray:
        return np.mean(self.values[Metric(metric or self.metric)], axis=2)

    def std(self, metric: Metric | None = None) -> np.ndarray:
        v = self.values[Metric(metric or self.metric)]
        return np.std(v, axis=2, ddof=1) if v.shape[2] > 1 else np.zeros(v.shape[:2])

    def best(self, metric: Metric | None = None) -> tuple[float, int, float]:
        """``(lambda, T, mean)`` of the best cell; ties favour smaller T, then larger lambda."""
        metric = Metric(metric or self.metric)
        M = self.mean(metric)
        sign = -1.0 if metric.higher_is_better else 1.0
        cells = [(sign * M[i, j], self.t_values[j], -self.lambdas[i], i, j)
                 for i in range(len(self.lambdas)) for j in range(len(self.t_values))]
        _, _, _, i, j = min(cells)
        return self.lambdas[i], self.t_values[j], float(M[i, j])

    def rows(self, metrics_: Sequence[Metric] | None = None) -> list[list]:
        out = []
        for m in metrics_ or [self.metric]:
            v = self.values[Metric(m)]
            for i, lam in enumerate(self.lambdas):
                for j, t in enumerate(self.t_values):
                    for k in range(v.shape[2]):
                        out.append([lam, t, k, Metric(m).value, float(v[i, j, k])])
        return out

    header = ["lambda", "T", "fold", "metric", "value"]

    def to_csv(self, path, metrics_: Sequence[Metric] | None = None) -> None:
        write_table(path, self.header, self.rows(metrics_))

    @classmethod
    def concat(cls, results: Sequence["GridResult"]) -> "GridResult":
        """Pool results over independent replicates by stacking their folds."""
        first = results[0]
        for r in results[1:]:
            if r.lambdas != first.lambdas or r.t_values != first.t_values:
                raise ValueError("grids differ")
        vals = {m: np.concatenate([r.values[m] for r in results], axis=2) for m in first.values}
        return cls(first.lambdas, first.t_values, first.metric, vals)


def _fold_scores(data: DataSet, views, grid: GridSpec, base: FitConfig, train, val):
    train_ds = data.subset(train)
    val_ds = data.subset(val)
    prep = prepare(train_ds, views, base)
    t_cap = grid.t_values[-1]
    mets = metrics_for(base.family)
    out = {m: np.empty((len(grid.lambdas), len(grid.t_values))) for m in mets}
    for i, lam in enumerate(grid.lambdas):
        model, trace = fit_prepared(prep, replace(base, lam=lam, t_max=t_cap))
        for j, t in enumerate(grid.t_values):
            mu = predict_mean(prefix_model(model, trace, t), val_ds)
            for m in mets:
                out[m][i, j] = score(m, mu, val_ds.y)
    return out


def grid_search(data: DataSet, views: Sequence[ViewSpec], grid: GridSpec, base: FitConfig,
                splits: Sequence[tuple[np.ndarray, np.ndarray]] | None = None,
                threads: int = 1) -> GridResult:
    """Score every (lambda, T) cell on each split.

    ``splits`` defaults to stratified (binomial) k-fold with ``grid.folds``
    folds. Scalers, intercepts and kernel anchors come from training rows only.
    """
    grid.check(base.family)
    if data.y is None:
        raise ConfigError("grid search needs an outcome", key="data")
    if splits is None:
        splits = kfold_split(data.n, grid.folds, grid.seed, y=data.y,
                             stratify=base.family is Family.BINOMIAL)
    splits = list(splits)

    def cell(k):
        tr, va = splits[k]
        return _fold_scores(data, views, grid, base, tr, va)

    if threads > 1 and len(splits) > 1:
        with ThreadPoolExecutor(threads) as ex:
            per_fold = list(ex.map(cell, range(len(splits))))
    else:
        per_fold = [cell(k) for k in range(len(splits))]
    vals = {m: np.stack([pf[m] for pf in per_fold], axis=2) for m in per_fold[0]}
    return GridResult(grid.lambdas, grid.t_values, grid.metric, vals)


def fit_t_capped(data: DataSet, views, config: FitConfig, train) -> ModelState:
    """Fresh fit on ``train`` rows only; used to check prefix equivalence."""
    return fit_prepared(prepare(data.subset(train), views, config), config)[0]
