"""Kernel functions, views, and the block-concatenated design matrix.

A *view* pairs one feature partition with one kernel. For ``N`` training
rows every view contributes an ``N x N`` Gram block, and the logical design
matrix ``K`` is the horizontal concatenation of those blocks in view order:
column ``c`` of ``K`` is column ``c % N`` of block ``c // N``.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from .errors import ConfigError, DataError, InputError, ModelError


class KernelKind(str, enum.Enum):
    LINEAR = "linear"
    POLYNOMIAL = "polynomial"
    RBF = "rbf"


_KIND_ALIASES = {"poly": KernelKind.POLYNOMIAL, "gaussian": KernelKind.RBF}


@dataclass(frozen=True)
class KernelSpec:
    """One kernel family member.

    RBF uses the standard-deviation convention
    ``exp(-||x - y||^2 / (2 sigma^2))``. ``degree``/``offset`` only matter for
    polynomial kernels and ``sigma`` only for RBF kernels.
    """

    kind: KernelKind
    degree: int = 2
    offset: float = 1.0
    sigma: float = 1.0
    name: str | None = None

    def __post_init__(self):
        kind = self.kind
        if not isinstance(kind, KernelKind):
            key = str(kind).lower()
            try:
                kind = _KIND_ALIASES.get(key) or KernelKind(key)
            except ValueError:
                raise ConfigError(f"unknown kernel kind {self.kind!r}", key="kind") from None
            object.__setattr__(self, "kind", kind)
        if kind is KernelKind.POLYNOMIAL:
            if int(self.degree) != self.degree or self.degree < 1:
                raise ConfigError(f"polynomial degree must be a positive integer, got {self.degree!r}",
                                  key="degree")
            if not (np.isfinite(self.offset) and self.offset >= 0):
                raise ConfigError(f"polynomial offset must be >= 0, got {self.offset!r}", key="offset")
            object.__setattr__(self, "degree", int(self.degree))
        if kind is KernelKind.RBF and not (np.isfinite(self.sigma) and self.sigma > 0):
            raise ConfigError(f"rbf sigma must be > 0, got {self.sigma!r}", key="sigma")

    @property
    def label(self) -> str:
        if self.name:
            return self.name
        if self.kind is KernelKind.LINEAR:
            return "linear"
        if self.kind is KernelKind.POLYNOMIAL:
            return f"poly{self.degree}"
        return f"rbf{self.sigma:g}"

    def to_dict(self) -> dict:
        d: dict = {"name": self.label, "kind": self.kind.value}
        if self.kind is KernelKind.POLYNOMIAL:
            d.update(degree=self.degree, offset=float(self.offset))
        elif self.kind is KernelKind.RBF:
            d["sigma"] = float(self.sigma)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "KernelSpec":
        allowed = {"name", "kind", "degree", "offset", "sigma"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown kernel keys {sorted(unknown)}", key=sorted(unknown)[0])
        if "kind" not in d:
            raise ConfigError("kernel entry needs a 'kind'", key="kind")
        kw = {}
        if "degree" in d:
            kw["degree"] = d["degree"]
        for k in ("offset", "sigma"):
            if k in d:
                try:
                    kw[k] = float(d[k])
                except (TypeError, ValueError):
                    raise ConfigError(f"kernel {k} must be a number, got {d[k]!r}", key=k) from None
        return cls(kind=d["kind"], name=d.get("name"), **kw)


def linear() -> KernelSpec:
    return KernelSpec(KernelKind.LINEAR)


def polynomial(degree: int = 2, offset: float = 1.0) -> KernelSpec:
    return KernelSpec(KernelKind.POLYNOMIAL, degree=degree, offset=offset)


def rbf(sigma: float) -> KernelSpec:
    return KernelSpec(KernelKind.RBF, sigma=sigma)


def _vector(x, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size == 0:
        raise InputError(f"{what} must be a non-empty vector")
    if not np.all(np.isfinite(x)):
        raise InputError(f"{what} contains non-finite values")
    return x


def eval_kernel(spec: KernelSpec, x, y) -> float:
    """Evaluate ``k(x, y)`` for a single pair of points."""
    x = _vector(x, "x")
    y = _vector(y, "y")
    if x.shape != y.shape:
        raise InputError(f"dimension mismatch: {x.shape[0]} vs {y.shape[0]}")
    if spec.kind is KernelKind.LINEAR:
        return float(np.dot(x, y))
    if spec.kind is KernelKind.POLYNOMIAL:
        return float((np.dot(x, y) + spec.offset) ** spec.degree)
    d = x - y
    return float(np.exp(-np.dot(d, d) / (2.0 * spec.sigma ** 2)))


def gram(spec: KernelSpec, X: np.ndarray, Y: np.ndarray | None = None) -> np.ndarray:
    """Kernel matrix ``G[i, j] = k(X[i], Y[j])``; symmetric when ``Y`` is omitted."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    sym = Y is None
    Y = X if sym else np.atleast_2d(np.asarray(Y, dtype=float))
    if X.shape[1] != Y.shape[1]:
        raise InputError(f"dimension mismatch: {X.shape[1]} vs {Y.shape[1]}")
    if spec.kind is KernelKind.RBF:
        G = np.exp(cdist(X, Y, "sqeuclidean") / (-2.0 * spec.sigma ** 2))
    else:
        G = X @ Y.T
        if spec.kind is KernelKind.POLYNOMIAL:
            G = (G + spec.offset) ** spec.degree
    if sym:
        # float addition commutes, so this is exactly symmetric
        G = 0.5 * (G + G.T)
    return G


@dataclass
class PartitionManifest:
    """Hierarchical feature partition.

    ``groups`` maps a group label to its member feature names and
    ``level_of`` maps it to an index into ``levels``. A feature may belong to
    several groups. ``parent`` optionally links a group to a coarser label
    used when rolling importance up (e.g. an individual feature to its class).
    """

    levels: list[str]
    groups: dict[str, list[str]]
    level_of: dict[str, int]
    parent: dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for g in self.groups:
            if g not in self.level_of:
                raise ConfigError(f"group {g!r} has no level", key=f"groups.{g}")
            lv = self.level_of[g]
            if not 0 <= lv < len(self.levels):
                raise ConfigError(f"group {g!r} has invalid level index {lv}", key=f"groups.{g}")
            if not self.groups[g]:
                raise ConfigError(f"group {g!r} has no features", key=f"groups.{g}")

    def groups_at(self, level: str | int) -> list[str]:
        idx = self.levels.index(level) if isinstance(level, str) else level
        return [g for g in self.groups if self.level_of[g] == idx]

    def check_features(self, header: Iterable[str]) -> None:
        known = set(header)
        for g, feats in self.groups.items():
            missing = [f for f in feats if f not in known]
            if missing:
                raise DataError(f"group {g!r} references unknown features {missing[:5]}")

    def rollup(self, label: str) -> str:
        return self.parent.get(label, label)


@dataclass(frozen=True)
class ViewSpec:
    view_id: int
    group: str
    kernel: KernelSpec

    @property
    def label(self) -> str:
        return f"{self.group}-{self.kernel.label}"


def _resolve_kernel(ref, kernels: Sequence[KernelSpec]) -> KernelSpec:
    if isinstance(ref, KernelSpec):
        if ref not in kernels:
            raise ConfigError(f"kernel {ref.label!r} is not in the kernel list", key="assignment")
        return ref
    for k in kernels:
        if k.label == ref:
            return k
    raise ConfigError(f"kernel {ref!r} is not in the kernel list", key="assignment")


def enumerate_views(manifest: PartitionManifest, kernels: Sequence[KernelSpec],
                    assignment: Mapping[str, Sequence] | None = None) -> list[ViewSpec]:
    """List every (group, kernel) view in manifest order, then kernel order.

    ``assignment`` maps a level name to the kernels (specs or labels) used at
    that level; omitted entirely, every level gets every kernel.
    """
    kernels = list(kernels)
    labels = [k.label for k in kernels]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"duplicate kernel names {labels}", key="kernels")
    per_level: dict[int, list[KernelSpec]] = {}
    for idx, level in enumerate(manifest.levels):
        if not manifest.groups_at(idx):
            continue
        if assignment is None:
            chosen = kernels
        else:
            refs = assignment.get(level)
            if not refs:
                raise ConfigError(f"no kernels assigned to level {level!r}",
                                  key=f"assignment.{level}")
            chosen = [_resolve_kernel(r, kernels) for r in refs]
            # keep declaration order and drop repeats
            chosen = [k for k in kernels if k in chosen]
        per_level[idx] = chosen
    views = []
    for g in manifest.groups:
        for k in per_level[manifest.level_of[g]]:
            views.append(ViewSpec(len(views), g, k))
    return views


@dataclass(frozen=True, order=True)
class ColumnId:
    """Column of ``K``: kernel of view ``view`` anchored at training row ``anchor``."""

    view: int
    anchor: int

    def flat(self, n: int) -> int:
        return self.view * n + self.anchor

    @classmethod
    def from_flat(cls, c: int, n: int) -> "ColumnId":
        v, a = divmod(int(c), n)
        return cls(view=v, anchor=a)


class BlockMode(str, enum.Enum):
    MATERIALIZE = "materialize"
    ON_DEMAND = "on_demand"


class KernelBlockSet:
    """Read-only access to the concatenated kernel design matrix.

    In ``MATERIALIZE`` mode all blocks are held as one ``(V, N, N)`` array;
    ``ON_DEMAND`` keeps only the features and rebuilds a block per access.
    Both paths call the same :func:`gram`, so their contents agree bitwise.
    """

    def __init__(self, Z: np.ndarray, columns: Sequence[str], views: Sequence[ViewSpec],
                 feature_index: Sequence[np.ndarray], mode: BlockMode, threads: int = 1):
        self.Z = Z
        self.columns = list(columns)
        self.views = list(views)
        self.feature_index = [np.asarray(ix, dtype=int) for ix in feature_index]
        self.mode = BlockMode(mode)
        self.n = Z.shape[0]
        self._blocks = None
        if self.mode is BlockMode.MATERIALIZE:
            blocks = np.empty((len(self.views), self.n, self.n))

            def work(v):
                blocks[v] = self._compute(v)

            if threads > 1 and len(self.views) > 1:
                with ThreadPoolExecutor(threads) as ex:
                    list(ex.map(work, range(len(self.views))))
            else:
                for v in range(len(self.views)):
                    work(v)
            blocks.setflags(write=False)
            self._blocks = blocks

    @property
    def n_views(self) -> int:
        return len(self.views)

    @property
    def n_columns(self) -> int:
        return self.n * len(self.views)

    @property
    def shape(self) -> tuple[int, int]:
        return self.n, self.n_columns

    def _compute(self, v: int) -> np.ndarray:
        return gram(self.views[v].kernel, self.view_features(v))

    def view_features(self, v: int) -> np.ndarray:
        return self.Z[:, self.feature_index[v]]

    def block(self, v: int) -> np.ndarray:
        if not 0 <= v < len(self.views):
            raise ModelError(f"unknown view {v}")
        if self._blocks is not None:
            return self._blocks[v]
        return self._compute(v)

    def column(self, c: int) -> np.ndarray:
        cid = ColumnId.from_flat(c, self.n)
        return self.block(cid.view)[:, cid.anchor]

    def columns_of(self, ids: Sequence[ColumnId]) -> np.ndarray:
        out = np.empty((self.n, len(ids)))
        for k, cid in enumerate(ids):
            out[:, k] = self.block(cid.view)[:, cid.anchor]
        return out

    def entry(self, i: int, c: int) -> float:
        return float(self.column(c)[i])

    def dense(self) -> np.ndarray:
        """The full ``N x J`` matrix; only sensible for small problems."""
        return np.hstack([self.block(v) for v in range(len(self.views))])

    def view_products(self, U: np.ndarray) -> np.ndarray:
        """Row ``v`` of the result is ``block_v @ U[v]`` (blocks are symmetric).

        Each product is a separate matrix-vector call of the same shape, so
        results do not depend on how views are batched.
        """
        out = np.empty((len(self.views), self.n))
        for v in range(len(self.views)):
            out[v] = self.block(v) @ U[v]
        return out


def build_blocks(data, views: Sequence[ViewSpec], mode: BlockMode | str = BlockMode.MATERIALIZE,
                 threads: int = 1) -> KernelBlockSet:
    """Construct the kernel blocks for ``views`` over the rows of ``data``.

    ``data`` is a :class:`glimark.data.DataSet` whose manifest resolves every
    view's group; features are used as stored (standardise beforehand).
    """
    if data.manifest is None:
        raise ConfigError("dataset has no partition manifest", key="manifest")
    if data.n < 2:
        raise DataError(f"need at least 2 rows, got {data.n}")
    pos = {c: i for i, c in enumerate(data.columns)}
    index = []
    for view in views:
        feats = data.manifest.groups.get(view.group)
        if feats is None:
            raise ConfigError(f"view group {view.group!r} is not in the manifest", key="manifest")
        try:
            index.append(np.array([pos[f] for f in feats], dtype=int))
        except KeyError as e:
            raise DataError(f"group {view.group!r} references unknown feature {e.args[0]!r}") from None
    used = sorted({int(i) for ix in index for i in ix})
    bad = [data.columns[i] for i in used if not np.all(np.isfinite(data.X[:, i]))]
    if bad:
        raise DataError(f"feature column {bad[0]!r} contains non-finite values")
    return KernelBlockSet(np.asarray(data.X, dtype=float), data.columns, views, index,
                          BlockMode(mode), threads=threads)


def cross_kernel_row(anchors: np.ndarray, view: ViewSpec | None, z_new) -> np.ndarray:
    """Kernel values between each stored anchor of a view and one new point.

    ``anchors`` is ``(m, d)`` with the view's group features; ``z_new`` is the
    new point restricted to the same features.
    """
    if view is None:
        raise ModelError("unknown view")
    anchors = np.atleast_2d(np.asarray(anchors, dtype=float))
    z = _vector(z_new, "z_new")
    if anchors.shape[1] != z.shape[0]:
        raise InputError(f"view {view.label} expects {anchors.shape[1]} features, got {z.shape[0]}")
    return gram(view.kernel, anchors, z[None, :])[:, 0]
