"""Pixel-level IoU / F1 metrics and run-vs-run comparison tables.

Reports carry per-slide rows plus two aggregates: "pooled" (counts summed
over all slides, the primary number) and "mean" (unweighted average of
per-slide scores). Both are always emitted because either aggregation is
defensible and they can disagree. Tables serialize as tab-separated text
and parse back losslessly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .raster import BinaryMask, same_grid


@dataclass(frozen=True)
class MetricEntry:
    slide: str
    tp: int
    fp: int
    fn: int

    @property
    def iou(self) -> float:
        denom = self.tp + self.fp + self.fn
        return 1.0 if denom == 0 else self.tp / denom

    @property
    def f1(self) -> float:
        denom = 2 * self.tp + self.fp + self.fn
        return 1.0 if denom == 0 else 2 * self.tp / denom


@dataclass(frozen=True)
class MetricReport:
    entries: tuple[MetricEntry, ...]

    @property
    def pooled(self) -> MetricEntry:
        return MetricEntry(
            "pooled",
            sum(e.tp for e in self.entries),
            sum(e.fp for e in self.entries),
            sum(e.fn for e in self.entries),
        )

    @property
    def mean_iou(self) -> float:
        if not self.entries:
            return 1.0
        return float(np.mean([e.iou for e in self.entries]))

    @property
    def mean_f1(self) -> float:
        if not self.entries:
            return 1.0
        return float(np.mean([e.f1 for e in self.entries]))

    def to_text(self) -> str:
        lines = ["slide\tTP\tFP\tFN\tIoU\tF1"]
        rows = list(self.entries) + [self.pooled]
        for e in rows:
            lines.append(f"{e.slide}\t{e.tp}\t{e.fp}\t{e.fn}\t{e.iou!r}\t{e.f1!r}")
        lines.append(f"mean\t-\t-\t-\t{self.mean_iou!r}\t{self.mean_f1!r}")
        return "\n".join(lines) + "\n"

    @staticmethod
    def from_text(text: str) -> "MetricReport":
        entries = []
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != "slide\tTP\tFP\tFN\tIoU\tF1":
            raise ValidationError("bad metric report header")
        for line in lines[1:]:
            slide, tp, fp, fn, _iou, _f1 = line.split("\t")
            if slide in ("pooled", "mean"):
                continue
            entries.append(MetricEntry(slide, int(tp), int(fp), int(fn)))
        return MetricReport(tuple(entries))


def iou_f1(pred: BinaryMask, gt: BinaryMask, slide: str = "slide") -> MetricEntry:
    """Pixel counts of one prediction against ground truth."""
    same_grid(pred, gt)
    p, g = pred.data, gt.data
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    return MetricEntry(slide, tp, fp, fn)


@dataclass(frozen=True)
class DeltaEntry:
    slide: str
    iou_delta: float
    f1_delta: float


@dataclass(frozen=True)
class DeltaTable:
    entries: tuple[DeltaEntry, ...]
    pooled: DeltaEntry

    def to_text(self) -> str:
        lines = ["slide\tdIoU\tdF1"]
        for e in list(self.entries) + [self.pooled]:
            lines.append(f"{e.slide}\t{e.iou_delta!r}\t{e.f1_delta!r}")
        return "\n".join(lines) + "\n"


def compare_runs(baseline: MetricReport, method: MetricReport) -> DeltaTable:
    """Per-slide and pooled IoU/F1 gains of `method` over `baseline`."""
    base = {e.slide: e for e in baseline.entries}
    meth = {e.slide: e for e in method.entries}
    if set(base) != set(meth):
        raise ValidationError(
            f"slide sets differ: {sorted(set(base) ^ set(meth))}"
        )
    entries = tuple(
        DeltaEntry(s, meth[s].iou - base[s].iou, meth[s].f1 - base[s].f1)
        for s in sorted(base)
    )
    pooled = DeltaEntry(
        "pooled",
        method.pooled.iou - baseline.pooled.iou,
        method.pooled.f1 - baseline.pooled.f1,
    )
    return DeltaTable(entries, pooled)
