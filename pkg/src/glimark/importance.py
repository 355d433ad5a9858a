"""Attribution of a fitted model's coefficient mass.

Importance of a cell is the sum of ``|alpha_j|`` over the selected columns
falling into it; percentages are shares of ``||alpha||_1`` (the intercept
has no view and is excluded).
"""

from __future__ import annotations

import enum
import io
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import fmt, write_table
from .errors import DataError
from .glm import Family
from .kernels import PartitionManifest
from .solver import ModelState


class Axis(str, enum.Enum):
    VIEW = "view"
    GROUP = "group"
    KERNEL = "kernel"
    PATIENT = "patient"
    GROUP_KERNEL = "group_kernel"


@dataclass(frozen=True)
class ImportanceEntry:
    label: str
    raw: float
    percent: float


@dataclass
class ImportanceReport:
    axis: Axis
    entries: list[ImportanceEntry]
    total: float
    notes: list[str] = field(default_factory=list)

    def as_dict(self) -> dict[str, float]:
        return {e.label: e.percent for e in self.entries}

    def raw_dict(self) -> dict[str, float]:
        return {e.label: e.raw for e in self.entries}

    header = ["axis", "label", "importance", "percent"]

    def rows(self) -> list[list]:
        return [[self.axis.value, e.label, e.raw, e.percent] for e in self.entries]

    def to_csv(self, path) -> None:
        write_table(path, self.header, self.rows())

    def format_table(self) -> str:
        buf = io.StringIO()
        for note in self.notes:
            buf.write(f"# {note}\n")
        width = max([len(e.label) for e in self.entries] + [len(self.axis.value)])
        buf.write(f"{self.axis.value:<{width}}  {'importance':>12}  {'percent':>8}\n")
        for e in self.entries:
            buf.write(f"{e.label:<{width}}  {e.raw:12.6g}  {e.percent:7.2f}%\n")
        buf.write(f"{'total':<{width}}  {self.total:12.6g}  {100.0 if self.entries else 0.0:7.2f}%\n")
        return buf.getvalue()


def _rollup_fn(rollup) -> Callable[[str], str]:
    if rollup is None:
        return lambda g: g
    if isinstance(rollup, PartitionManifest):
        return rollup.rollup
    return lambda g: rollup.get(g, g)


def _key_fn(model: ModelState, axis: Axis, rollup) -> Callable[[int], str]:
    up = _rollup_fn(rollup)
    views = {v.view_id: v for v in model.views}

    def key(k: int) -> str:
        cid = model.order[k]
        v = views[cid.view]
        if axis is Axis.VIEW:
            return f"{v.view_id}:{v.label}"
        if axis is Axis.GROUP:
            return up(v.group)
        if axis is Axis.KERNEL:
            return v.kernel.label
        if axis is Axis.GROUP_KERNEL:
            return f"{up(v.group)}-{v.kernel.label}"
        return str(model.anchor_rows[k])

    return key


def aggregate(model: ModelState, axis: Axis | str,
              rollup: PartitionManifest | Mapping[str, str] | None = None) -> ImportanceReport:
    """Sum ``|alpha|`` per cell of ``axis`` and express it as a percentage.

    ``rollup`` relabels groups (for example individual features to their
    feature class) before grouping on the group-based axes.
    """
    axis = Axis(axis)
    key = _key_fn(model, axis, rollup)
    sums: dict[str, float] = defaultdict(float)
    for k, a in enumerate(model.alpha):
        sums[key(k)] += abs(float(a))
    total = float(np.sum(np.abs(model.alpha)))
    items = sorted(sums.items(), key=lambda kv: (-kv[1], kv[0]))
    entries = [ImportanceEntry(lbl, raw, 100.0 * raw / total if total > 0 else 0.0)
               for lbl, raw in items]
    return ImportanceReport(axis, entries, total)


def average_reports(reports: Sequence[ImportanceReport]) -> ImportanceReport:
    """Mean of per-replicate percentages (each report is normalised first)."""
    if not reports:
        raise ValueError("no reports to average")
    axis = reports[0].axis
    labels = sorted({e.label for r in reports for e in r.entries})
    pct = {lbl: float(np.mean([r.as_dict().get(lbl, 0.0) for r in reports])) for lbl in labels}
    raw = {lbl: float(np.mean([r.raw_dict().get(lbl, 0.0) for r in reports])) for lbl in labels}
    entries = [ImportanceEntry(lbl, raw[lbl], pct[lbl])
               for lbl in sorted(labels, key=lambda s: (-pct[s], s))]
    return ImportanceReport(axis, entries, float(np.mean([r.total for r in reports])),
                            notes=[f"average of {len(reports)} replicates; "
                                   "percentages normalised per replicate, then averaged"])


@dataclass
class RepresenterRecord:
    patient: object
    total: float
    per_view: dict[str, float]
    label: float | None
    sign: int


def top_representers(model: ModelState, k: int) -> list[RepresenterRecord]:
    """The ``k`` training points carrying the most coefficient mass."""
    if k < 1:
        raise ValueError("k must be positive")
    views = {v.view_id: v for v in model.views}
    by_patient: dict[str, list[int]] = defaultdict(list)
    for j in range(len(model.order)):
        by_patient[str(model.anchor_rows[j])].append(j)
    out = []
    for pid, js in by_patient.items():
        per_view: dict[str, float] = defaultdict(float)
        for j in js:
            per_view[views[model.order[j].view].label] += abs(float(model.alpha[j]))
        dominant = max(js, key=lambda j: (abs(model.alpha[j]), -j))
        label = model.anchor_y[js[0]] if model.anchor_y else None
        out.append(RepresenterRecord(model.anchor_rows[js[0]], float(sum(abs(model.alpha[j]) for j in js)),
                                     dict(per_view), label, int(np.sign(model.alpha[dominant]))))
    out.sort(key=lambda r: (-r.total, str(r.patient)))
    return out[:k]


def sign_agreement(model: ModelState, labels=None) -> float:
    """Share of nonzero coefficients whose sign matches the anchor's class.

    A positive coefficient agrees with label 1 and a negative one with label 0.
    ``labels`` is indexed by training row; by default the outcomes stored with
    the anchors are used.
    """
    if model.family is not Family.BINOMIAL:
        raise DataError("sign agreement needs a binomial model")
    if labels is None:
        if not model.anchor_y:
            raise DataError("model stores no anchor labels; pass labels explicitly")
        lab = np.asarray(model.anchor_y, dtype=float)
    else:
        labels = np.asarray(labels, dtype=float)
        if not np.all((labels == 0) | (labels == 1)):
            raise DataError("labels must be binary")
        lab = labels[[c.anchor for c in model.order]]
    if lab.size and not np.all((lab == 0) | (lab == 1)):
        raise DataError("labels must be binary")
    a = model.alpha
    nz = a != 0
    if not np.any(nz):
        return float("nan")
    agree = ((a > 0) & (lab == 1)) | ((a < 0) & (lab == 0))
    return float(np.mean(agree[nz]))


def representers_table(records: Sequence[RepresenterRecord]) -> tuple[list[str], list[list]]:
    header = ["rank", "patient", "total", "label", "sign", "view", "contribution"]
    rows = []
    for r, rec in enumerate(records, start=1):
        for view, val in sorted(rec.per_view.items(), key=lambda kv: (-kv[1], kv[0])):
            rows.append([r, rec.patient, rec.total, "" if rec.label is None else fmt(rec.label),
                         rec.sign, view, val])
    return header, rows
