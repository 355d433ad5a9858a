"""Greedy column-generation fitting of multiple-kernel GLMs.

Starting from the intercept-only model, each outer iteration screens every
unselected column of the concatenated kernel matrix by the magnitude of the
objective's partial derivative, adds the steepest one, and re-optimises all
selected coefficients plus the intercept with Adam. The objective is

    H(alpha, b) = -(1/N) sum_i [y_i f_i - b(f_i)] + lambda * P(alpha)

where ``P`` is either the direct-sum RKHS norm ``alpha' G alpha`` (``G``
block-diagonal over views, entries read from the kernel blocks) or the plain
ridge ``||alpha||^2``.
"""

from __future__ import annotations

import enum
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import glm
from .data import DataSet, Standardizer
from .errors import ColumnsExhausted, ConfigError, DataError, DivergenceError, ModelError
from .glm import Family
from .kernels import (BlockMode, ColumnId, KernelBlockSet, KernelSpec, PartitionManifest, ViewSpec,
                      build_blocks, gram)

MODEL_FORMAT = "glimark-model"
MODEL_VERSION = 1


class Penalty(str, enum.Enum):
    RKHS = "rkhs"
    RIDGE = "ridge"


@dataclass(frozen=True)
class AdamConfig:
    step_size: float = 1e-2
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_inner_iters: int = 200
    inner_tol: float = 1e-8
    # run Adam on column-RMS-scaled coefficients so step_size is kernel-scale free
    precondition: bool = False

    def __post_init__(self):
        if not self.step_size > 0:
            raise ConfigError("step_size must be > 0", key="inner.step_size")
        if not 0 <= self.beta1 < 1:
            raise ConfigError("beta1 must lie in [0, 1)", key="inner.beta1")
        if not 0 <= self.beta2 < 1:
            raise ConfigError("beta2 must lie in [0, 1)", key="inner.beta2")
        if not self.epsilon > 0:
            raise ConfigError("epsilon must be > 0", key="inner.epsilon")
        if int(self.max_inner_iters) != self.max_inner_iters or self.max_inner_iters < 1:
            raise ConfigError("max_inner_iters must be a positive integer", key="inner.max_inner_iters")
        if not self.inner_tol >= 0:
            raise ConfigError("inner_tol must be >= 0", key="inner.inner_tol")


@dataclass(frozen=True)
class FitConfig:
    family: Family
    lam: float = 1e-3
    t_max: int = 400
    tol: float = 1e-6
    penalty: Penalty = Penalty.RKHS
    inner: AdamConfig = field(default_factory=AdamConfig)
    standardize: bool = True
    mode: BlockMode = BlockMode.MATERIALIZE
    threads: int = 1

    def __post_init__(self):
        object.__setattr__(self, "family", Family.parse(self.family))
        try:
            object.__setattr__(self, "penalty", Penalty(self.penalty))
        except ValueError:
            raise ConfigError(f"unknown penalty {self.penalty!r}", key="fit.penalty") from None
        object.__setattr__(self, "mode", BlockMode(self.mode))
        if not (np.isfinite(self.lam) and self.lam >= 0):
            raise ConfigError("lambda must be a finite number >= 0", key="fit.lambda")
        if int(self.t_max) != self.t_max or self.t_max < 1:
            raise ConfigError("t_max must be a positive integer", key="fit.t_max")
        if not self.tol > 0:
            raise ConfigError("tol must be > 0", key="fit.tol")
        if int(self.threads) != self.threads or self.threads < 1:
            raise ConfigError("threads must be a positive integer", key="threads")

    def to_dict(self) -> dict:
        return {"family": self.family.value, "lambda": self.lam, "t_max": self.t_max,
                "tol": self.tol, "penalty": self.penalty.value, "standardize": self.standardize,
                "mode": self.mode.value, "inner": asdict(self.inner)}


# ---------------------------------------------------------------------------
# Model state
# ---------------------------------------------------------------------------


@dataclass
class ModelState:
    """Sparse fitted model.

    ``order[k]``, ``alpha[k]`` and ``anchors[k]`` describe the k-th selected
    column; anchors are standardised feature subvectors of that column's
    view, which is all prediction needs.
    """

    family: Family
    views: list[ViewSpec]
    view_features: list[list[str]]
    scaler: Standardizer
    b: float
    n_train: int
    order: list[ColumnId] = field(default_factory=list)
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))
    anchors: list[np.ndarray] = field(default_factory=list)
    anchor_rows: list = field(default_factory=list)
    anchor_y: list = field(default_factory=list)
    youden_threshold: float | None = None
    config: dict = field(default_factory=dict)

    def __post_init__(self):
        self.alpha = np.asarray(self.alpha, dtype=float)
        if len(self.order) != self.alpha.shape[0] or len(self.order) != len(self.anchors):
            raise ModelError("order, alpha and anchors must align")
        if len(set(self.order)) != len(self.order):
            raise ModelError("selection order contains duplicates")

    @property
    def coef(self) -> dict[ColumnId, float]:
        return {c: float(a) for c, a in zip(self.order, self.alpha)}

    @property
    def n_selected(self) -> int:
        return len(self.order)

    def view(self, view_id: int) -> ViewSpec:
        for v in self.views:
            if v.view_id == view_id:
                return v
        raise ModelError(f"unknown view {view_id}")

    # -- serialisation ------------------------------------------------------

    def to_dict(self) -> dict:
        cols = []
        for k, cid in enumerate(self.order):
            rec = {"view_id": cid.view, "anchor": cid.anchor, "row_id": _jsonable(self.anchor_rows[k]),
                   "alpha": float(self.alpha[k]),
                   "anchor_values": [float(v) for v in self.anchors[k]]}
            if self.anchor_y:
                rec["y"] = float(self.anchor_y[k])
            cols.append(rec)
        return {
            "format": MODEL_FORMAT,
            "version": MODEL_VERSION,
            "family": self.family.value,
            "b": float(self.b),
            "n_train": int(self.n_train),
            "youden_threshold": None if self.youden_threshold is None else float(self.youden_threshold),
            "config": self.config,
            "scaler": self.scaler.to_dict(),
            "views": [{"view_id": v.view_id, "group": v.group, "features": list(f),
                       "kernel": v.kernel.to_dict()} for v, f in zip(self.views, self.view_features)],
            "columns": cols,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelState":
        if d.get("format") != MODEL_FORMAT:
            raise ModelError("not a glimark model file")
        if d.get("version") != MODEL_VERSION:
            raise ModelError(f"unsupported model version {d.get('version')!r}")
        views = [ViewSpec(v["view_id"], v["group"], KernelSpec.from_dict(v["kernel"])) for v in d["views"]]
        feats = [list(v["features"]) for v in d["views"]]
        cols = d["columns"]
        return cls(
            family=Family.parse(d["family"]), views=views, view_features=feats,
            scaler=Standardizer.from_dict(d["scaler"]), b=float(d["b"]), n_train=int(d["n_train"]),
            order=[ColumnId(view=c["view_id"], anchor=c["anchor"]) for c in cols],
            alpha=np.array([c["alpha"] for c in cols], dtype=float),
            anchors=[np.array(c["anchor_values"], dtype=float) for c in cols],
            anchor_rows=[c["row_id"] for c in cols],
            anchor_y=[c["y"] for c in cols] if cols and all("y" in c for c in cols) else [],
            youden_threshold=d.get("youden_threshold"),
            config=d.get("config", {}),
        )

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def load(cls, path) -> "ModelState":
        try:
            d = json.loads(Path(path).read_text())
        except json.JSONDecodeError as e:
            raise ModelError(f"{path}: invalid JSON ({e})") from None
        return cls.from_dict(d)


def _jsonable(v):
    if isinstance(v, np.integer):
        return int(v)
    return v


@dataclass
class TraceRecord:
    iteration: int
    column: ColumnId
    flat_index: int
    gradient: float
    objective: float
    inner_iters: int
    wall_time: float
    alpha: np.ndarray
    b: float


@dataclass
class FitTrace:
    initial_objective: float
    b0: float
    records: list[TraceRecord] = field(default_factory=list)
    stop_reason: str = "t_max"

    @property
    def objectives(self) -> np.ndarray:
        return np.array([self.initial_objective] + [r.objective for r in self.records])

    def to_rows(self) -> list[list]:
        return [[r.iteration, r.column.view, r.column.anchor, r.flat_index, abs(r.gradient),
                 r.objective, r.inner_iters, r.wall_time] for r in self.records]

    header = ["iteration", "view_id", "anchor", "column", "abs_gradient", "objective",
              "inner_iters", "wall_time"]


def prefix_model(model: ModelState, trace: FitTrace, t: int) -> ModelState:
    """Model after the first ``t`` outer iterations of a longer fit.

    Coefficients are those re-optimised at iteration ``t``; asking for more
    iterations than the fit ran returns the final model.
    """
    if t < 0:
        raise ValueError("t must be >= 0")
    if t >= len(trace.records):
        return model
    if t == 0:
        alpha, b = np.zeros(0), trace.b0
    else:
        rec = trace.records[t - 1]
        alpha, b = rec.alpha, rec.b
    return replace(model, order=model.order[:t], alpha=alpha.copy(), b=float(b),
                   anchors=model.anchors[:t], anchor_rows=model.anchor_rows[:t],
                   anchor_y=model.anchor_y[:t] if model.anchor_y else [])


# ---------------------------------------------------------------------------
# Objective and gradients over the full column space
# ---------------------------------------------------------------------------


def _dual_grid(blocks: KernelBlockSet, order: Sequence[ColumnId], alpha) -> np.ndarray:
    """Scatter selected coefficients into a ``(V, N)`` array."""
    U = np.zeros((blocks.n_views, blocks.n))
    for cid, a in zip(order, alpha):
        U[cid.view, cid.anchor] = a
    return U


def linear_predictor(blocks: KernelBlockSet, order: Sequence[ColumnId], alpha, b: float) -> np.ndarray:
    f = np.full(blocks.n, float(b))
    if len(order):
        f = blocks.columns_of(order) @ np.asarray(alpha, dtype=float) + b
    return f


def objective(blocks: KernelBlockSet, y, family: Family | str, alpha, b: float,
              penalty: Penalty | str = Penalty.RKHS, lam: float = 0.0) -> float:
    """``H`` for a dense coefficient vector of length ``J`` (view-major)."""
    family = Family.parse(family)
    A = np.asarray(alpha, dtype=float).reshape(blocks.n_views, blocks.n)
    KA = blocks.view_products(A)
    f = KA.sum(axis=0) + b
    loss = glm.nll(family, y, f)
    if Penalty(penalty) is Penalty.RKHS:
        pen = float(np.sum(A * KA))
    else:
        pen = float(np.sum(A * A))
    return loss + lam * pen


def gradient(blocks: KernelBlockSet, y, family: Family | str, alpha, b: float,
             penalty: Penalty | str = Penalty.RKHS, lam: float = 0.0,
             threads: int = 1) -> tuple[np.ndarray, float]:
    """Analytic ``(dH/dalpha, dH/db)`` for a dense coefficient vector.

    One matrix-vector product per view: ``block_v @ (-r/N + 2 lambda alpha_v)``
    (RKHS penalty) or ``block_v @ (-r/N) + 2 lambda alpha_v`` (ridge).
    """
    family = Family.parse(family)
    A = np.asarray(alpha, dtype=float).reshape(blocks.n_views, blocks.n)
    f = blocks.view_products(A).sum(axis=0) + b
    r = glm.residuals(family, y, f)
    g_b = -float(np.mean(r))
    G = _screen_products(blocks, r, A, Penalty(penalty), lam, threads)
    return G.ravel(), g_b


def _screen_products(blocks, r, A, penalty, lam, threads) -> np.ndarray:
    n = blocks.n
    base = -r / n
    if penalty is Penalty.RKHS:
        U = base[None, :] + 2.0 * lam * A
        extra = 0.0
    else:
        U = np.broadcast_to(base, (blocks.n_views, n))
        extra = 2.0 * lam * A
    if threads > 1 and blocks.n_views > 1:
        out = np.empty((blocks.n_views, n))

        def work(v):
            out[v] = blocks.block(v) @ U[v]

        with ThreadPoolExecutor(threads) as ex:
            list(ex.map(work, range(blocks.n_views)))
    else:
        out = blocks.view_products(U)
    return out + extra


def penalty_value(state: ModelState, blocks: KernelBlockSet, penalty: Penalty | str,
                  lam: float) -> float:
    """``lambda * alpha' G alpha`` (RKHS) or ``lambda * ||alpha||^2`` (ridge)."""
    if not state.order:
        return 0.0
    a = state.alpha
    if Penalty(penalty) is Penalty.RIDGE:
        return float(lam * a @ a)
    return float(lam * a @ (_penalty_gram(blocks, state.order) @ a))


def _penalty_gram(blocks: KernelBlockSet, order: Sequence[ColumnId]) -> np.ndarray:
    t = len(order)
    G = np.zeros((t, t))
    by_view: dict[int, list[int]] = {}
    for k, cid in enumerate(order):
        by_view.setdefault(cid.view, []).append(k)
    for v, ks in by_view.items():
        B = blocks.block(v)
        anchors = [order[k].anchor for k in ks]
        G[np.ix_(ks, ks)] = B[np.ix_(anchors, anchors)]
    return G


# ---------------------------------------------------------------------------
# Screening and inner solve
# ---------------------------------------------------------------------------


def screen(state: ModelState, blocks: KernelBlockSet, y, config: FitConfig) -> tuple[ColumnId, float]:
    """Steepest unselected column and its signed partial derivative.

    Ties go to the lowest flat column index.
    """
    fam = config.family
    n = blocks.n
    if len(state.order) >= blocks.n_columns:
        raise ColumnsExhausted("all columns are already selected")
    f = linear_predictor(blocks, state.order, state.alpha, state.b)
    r = glm.residuals(fam, y, f)
    A = _dual_grid(blocks, state.order, state.alpha)
    grads = _screen_products(blocks, r, A, config.penalty, config.lam, config.threads).ravel()
    score = np.abs(grads)
    if state.order:
        score[[c.flat(n) for c in state.order]] = -np.inf
    c = int(np.argmax(score))
    return ColumnId.from_flat(c, n), float(grads[c])


def _adam(KS: np.ndarray, G: np.ndarray | None, y: np.ndarray, a0: np.ndarray, b0: float,
          family: Family, lam: float, adam: AdamConfig, where: str = "") -> tuple[np.ndarray, float, float, int]:
    """Minimise ``H`` over the selected coefficients and intercept.

    Returns the lowest-objective iterate seen (the start point included), so
    the objective never increases across a call.
    """
    n = y.shape[0]
    t = a0.shape[0]
    if adam.precondition:
        scale = np.sqrt(np.mean(KS * KS, axis=0))
        scale[~(scale > 0)] = 1.0
    else:
        scale = np.ones(t)
    # Adam iterates on u = alpha * scale
    theta = np.concatenate([a0 * scale, [b0]])
    m = np.zeros_like(theta)
    v = np.zeros_like(theta)
    lr, b1, b2, eps = adam.step_size, adam.beta1, adam.beta2, adam.epsilon
    ridge = G is None

    def evaluate(th):
        a, b = th[:t] / scale, th[t]
        f = KS @ a + b
        bf, mu = glm.b_and_mean(family, f)
        r = y - mu
        Ga = a if ridge else G @ a
        H = float(np.mean(bf - y * f) + lam * (a @ Ga))
        g = np.empty_like(th)
        g[:t] = (-(KS.T @ r) / n + 2.0 * lam * Ga) / scale
        g[t] = -np.mean(r)
        return H, g

    with np.errstate(over="ignore", invalid="ignore"):
        H, g = evaluate(theta)
        if not np.isfinite(H):
            raise DivergenceError(f"non-finite objective at the start of the inner solve{where}",
                                  iteration=0)
        best_H, best = H, theta.copy()
        H_prev = H
        k = 0
        for k in range(1, adam.max_inner_iters + 1):
            m = b1 * m + (1.0 - b1) * g
            v = b2 * v + (1.0 - b2) * g * g
            mhat = m / (1.0 - b1 ** k)
            vhat = v / (1.0 - b2 ** k)
            theta = theta - lr * mhat / (np.sqrt(vhat) + eps)
            H, g = evaluate(theta)
            if not (np.isfinite(H) and np.all(np.isfinite(g))):
                raise DivergenceError(f"non-finite objective at inner iteration {k}{where}", iteration=k)
            if H < best_H:
                best_H, best = H, theta.copy()
            if abs(H - H_prev) <= adam.inner_tol * max(abs(H_prev), 1e-12):
                break
            H_prev = H
    return best[:t] / scale, float(best[t]), best_H, k


def _state_gram(blocks, order, penalty) -> np.ndarray | None:
    return None if penalty is Penalty.RIDGE else _penalty_gram(blocks, order)


def inner_solve(state: ModelState, blocks: KernelBlockSet, y, config: FitConfig) -> ModelState:
    """Re-optimise every selected coefficient and the intercept, warm-started."""
    if not state.order:
        raise ModelError("inner_solve needs at least one selected column")
    y = glm.check_outcome(config.family, y)
    KS = blocks.columns_of(state.order)
    G = _state_gram(blocks, state.order, config.penalty)
    a, b, _, _ = _adam(KS, G, y, state.alpha.copy(), state.b, config.family, config.lam, config.inner)
    return replace(state, alpha=a, b=b)


def state_objective(state: ModelState, blocks: KernelBlockSet, y, config: FitConfig) -> float:
    f = linear_predictor(blocks, state.order, state.alpha, state.b)
    return glm.nll(config.family, y, f) + penalty_value(state, blocks, config.penalty, config.lam)


# ---------------------------------------------------------------------------
# Full fit
# ---------------------------------------------------------------------------


@dataclass
class Prepared:
    """Standardised training features and their kernel blocks."""

    blocks: KernelBlockSet
    scaler: Standardizer
    view_features: list[list[str]]
    y: np.ndarray
    row_ids: list


def used_features(data: DataSet, views: Sequence[ViewSpec]) -> list[str]:
    if data.manifest is None:
        raise ConfigError("dataset has no partition manifest", key="manifest")
    wanted = set()
    for v in views:
        if v.group not in data.manifest.groups:
            raise ConfigError(f"view group {v.group!r} is not in the manifest", key="manifest")
        wanted.update(data.manifest.groups[v.group])
    return [c for c in data.columns if c in wanted]


def prepare(data: DataSet, views: Sequence[ViewSpec], config: FitConfig) -> Prepared:
    if data.y is None:
        raise DataError("training data has no outcome")
    if data.n < 2:
        raise DataError(f"need at least 2 training rows, got {data.n}")
    y = glm.check_outcome(config.family, data.y)
    cols = used_features(data, views)
    raw = data.select_columns(cols)
    bad = [c for c, ok in zip(cols, np.all(np.isfinite(raw), axis=0)) if not ok]
    if bad:
        raise DataError(f"feature column {bad[0]!r} contains non-finite values")
    scaler = Standardizer.fit(raw, cols, enabled=config.standardize)
    man = data.manifest
    used = {v.group for v in views}
    sub = PartitionManifest(man.levels, {g: f for g, f in man.groups.items() if g in used},
                            {g: lv for g, lv in man.level_of.items() if g in used},
                            {g: p for g, p in man.parent.items() if g in used})
    std = DataSet(scaler.transform(raw), cols, manifest=sub, row_ids=data.row_ids)
    blocks = build_blocks(std, views, config.mode, threads=config.threads)
    feats = [list(data.manifest.groups[v.group]) for v in views]
    return Prepared(blocks, scaler, feats, y, list(data.row_ids))


def fit(data: DataSet, views: Sequence[ViewSpec], config: FitConfig) -> tuple[ModelState, FitTrace]:
    """Run the greedy selection loop on a training set."""
    return fit_prepared(prepare(data, views, config), config)


def fit_prepared(prep: Prepared, config: FitConfig) -> tuple[ModelState, FitTrace]:
    blocks, y = prep.blocks, prep.y
    fam, n = config.family, blocks.n
    p_plus = float(np.mean(y))
    b0 = glm.link(fam, p_plus)
    state = ModelState(family=fam, views=list(blocks.views), view_features=prep.view_features,
                       scaler=prep.scaler, b=b0, n_train=n, config=config.to_dict())
    trace = FitTrace(initial_objective=state_objective(state, blocks, y, config), b0=b0)

    order: list[ColumnId] = []
    cols: list[np.ndarray] = []
    alpha = np.zeros(0)
    b = b0
    G = None if config.penalty is Penalty.RIDGE else np.zeros((0, 0))
    for t in range(config.t_max):
        t0 = time.perf_counter()
        try:
            cid, grad = screen(replace(state, order=order, alpha=alpha, b=b,
                                       anchors=[None] * len(order)), blocks, y, config)
        except ColumnsExhausted:
            trace.stop_reason = "exhausted"
            break
        if abs(grad) <= config.tol:
            trace.stop_reason = "tol"
            break
        order = order + [cid]
        block = blocks.block(cid.view)
        cols.append(block[:, cid.anchor])
        KS = np.column_stack(cols)
        if G is not None:
            G = _grow_gram(G, order, block)
        alpha, b, H, iters = _adam(KS, G, y, np.append(alpha, 0.0), b, fam, config.lam,
                                   config.inner, where=f" (outer iteration {t + 1})")
        trace.records.append(TraceRecord(t + 1, cid, cid.flat(n), grad, H, iters,
                                         time.perf_counter() - t0, alpha.copy(), b))
    return _finish(state, prep, order, alpha, b), trace


def _grow_gram(G: np.ndarray, order: Sequence[ColumnId], block: np.ndarray) -> np.ndarray:
    t = len(order)
    new = order[-1]
    out = np.zeros((t, t))
    out[:t - 1, :t - 1] = G
    same = [k for k, c in enumerate(order) if c.view == new.view]
    anchors = [order[k].anchor for k in same]
    row = block[new.anchor, anchors]
    out[t - 1, same] = row
    out[same, t - 1] = row
    return out


def _finish(state: ModelState, prep: Prepared, order, alpha, b) -> ModelState:
    blocks = prep.blocks
    anchors = [blocks.view_features(c.view)[c.anchor].copy() for c in order]
    return replace(state, order=list(order), alpha=np.asarray(alpha, dtype=float), b=float(b),
                   anchors=anchors, anchor_rows=[prep.row_ids[c.anchor] for c in order],
                   anchor_y=[float(prep.y[c.anchor]) for c in order])


# ---------------------------------------------------------------------------
# Prediction
# ---------------------------------------------------------------------------


def _standardized_inputs(model: ModelState, X, columns: Sequence[str] | None) -> np.ndarray:
    if isinstance(X, DataSet):
        raw = X.select_columns(model.scaler.columns)
    else:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if columns is None:
            if X.shape[1] != len(model.scaler.columns):
                raise DataError(f"expected {len(model.scaler.columns)} feature columns, got {X.shape[1]}")
            raw = X
        else:
            pos = {c: i for i, c in enumerate(columns)}
            missing = [c for c in model.scaler.columns if c not in pos]
            if missing:
                raise DataError(f"missing feature column {missing[0]!r}")
            raw = X[:, [pos[c] for c in model.scaler.columns]]
    if not np.all(np.isfinite(raw)):
        raise DataError("prediction inputs contain non-finite values")
    return model.scaler.transform(raw)


def predict(model: ModelState, X, columns: Sequence[str] | None = None) -> np.ndarray:
    """Linear predictor ``f(z) = b + sum_j alpha_j k_view(j)(anchor_j, z)``.

    ``X`` holds raw feature values, either as a :class:`DataSet` or as an
    array whose columns are ``columns`` (default: the model's own feature
    order). The stored scaler is applied before kernel evaluation.
    """
    Z = _standardized_inputs(model, X, columns)
    f = np.full(Z.shape[0], float(model.b))
    if not model.order:
        return f
    pos = {c: i for i, c in enumerate(model.scaler.columns)}
    by_view: dict[int, list[int]] = {}
    for k, cid in enumerate(model.order):
        by_view.setdefault(cid.view, []).append(k)
    vpos = {v.view_id: i for i, v in enumerate(model.views)}
    for vid in sorted(by_view):
        ks = by_view[vid]
        if vid not in vpos:
            raise ModelError(f"unknown view {vid}")
        i = vpos[vid]
        view = model.views[i]
        Zv = Z[:, [pos[c] for c in model.view_features[i]]]
        A = np.vstack([model.anchors[k] for k in ks])
        f += model.alpha[ks] @ gram(view.kernel, A, Zv)
    return f


def predict_mean(model: ModelState, X, columns: Sequence[str] | None = None) -> np.ndarray:
    return np.atleast_1d(glm.mean(model.family, predict(model, X, columns)))
