"""Foreground-coverage metrics against manual masks.

A labeling is scored by the F-measure of its best single segment, the
best union of segments (exact power-set search up to a size limit, then
greedy), and the fragmentation of that best union (segments minus one).
Because segments are disjoint, any union's F-measure reduces to
2*I / (U + G) from per-segment intersections I and sizes U.
"""

import numpy as np
from dataclasses import dataclass

from .errors import EmptyMaskError, EmptySegmentError
from .image_io import BinaryMask, LabelMap, check_same_shape

EXACT_LIMIT = 20


@dataclass
class FMultiResult:
    f: float
    subset: tuple  # segment indices, ascending
    method: str  # "exact" or "greedy"


@dataclass
class AnnotatorScores:
    f_single: float
    f_multi: float
    f_frag: int
    subset: tuple
    method: str


@dataclass
class EvalReport:
    per_annotator: list  # AnnotatorScores, one per mask
    mean_f_single: float
    mean_f_multi: float
    mean_f_frag: float


def segment_sets(lm: LabelMap):
    """Boolean pixel masks, one per label id."""
    return [lm.data == lbl for lbl in range(lm.num_labels)]


def precision_recall(segment, mask: BinaryMask):
    """P = |seg & fg| / |seg|, R = |seg & fg| / |fg|."""
    seg = np.asarray(segment, dtype=bool)
    fg = mask.data
    seg_size = int(seg.sum())
    fg_size = int(fg.sum())
    if fg_size == 0:
        raise EmptyMaskError("mask has no foreground")
    if seg_size == 0:
        raise EmptySegmentError("segment has no pixels")
    inter = int((seg & fg).sum())
    return inter / seg_size, inter / fg_size


def f_measure(p, r):
    """2PR / (P + R), taken as 0 when both are 0."""
    if p + r == 0.0:
        return 0.0
    return 2.0 * p * r / (p + r)


def _subset_stats(segments, mask):
    fg = mask.data
    fg_size = int(fg.sum())
    if fg_size == 0:
        raise EmptyMaskError("mask has no foreground")
    inter = np.array([int((np.asarray(s, bool) & fg).sum()) for s in segments], dtype=np.float64)
    sizes = np.array([int(np.asarray(s, bool).sum()) for s in segments], dtype=np.float64)
    return inter, sizes, fg_size


def f_single(segments, mask: BinaryMask) -> float:
    """Best F-measure over individual segments."""
    inter, sizes, fg_size = _subset_stats(segments, mask)
    return float((2.0 * inter / (sizes + fg_size)).max())


def f_multi(segments, mask: BinaryMask, exact_limit: int = EXACT_LIMIT) -> FMultiResult:
    """Best F-measure over non-empty unions of segments.

    Exact power-set maximization up to ``exact_limit`` segments (ties
    prefer fewer segments, then the lexicographically smallest index
    tuple); greedy forward selection beyond that.
    """
    inter, sizes, fg_size = _subset_stats(segments, mask)
    n = len(sizes)
    if n <= exact_limit:
        return _f_multi_exact(inter, sizes, fg_size, n)
    return _f_multi_greedy(inter, sizes, fg_size, n)


def _f_multi_exact(inter, sizes, fg_size, n):
    # Doubling construction: entry m holds the sums for subset bitmask m.
    sub_inter = np.zeros(1)
    sub_sizes = np.zeros(1)
    for s in range(n):
        sub_inter = np.concatenate([sub_inter, sub_inter + inter[s]])
        sub_sizes = np.concatenate([sub_sizes, sub_sizes + sizes[s]])
    f = 2.0 * sub_inter[1:] / (sub_sizes[1:] + fg_size)
    best_f = f.max()
    candidates = np.flatnonzero(f == best_f) + 1
    subsets = [tuple(s for s in range(n) if int(m) >> s & 1) for m in candidates]
    subset = min(subsets, key=lambda t: (len(t), t))
    return FMultiResult(f=float(best_f), subset=subset, method="exact")


def _f_multi_greedy(inter, sizes, fg_size, n):
    f_one = 2.0 * inter / (sizes + fg_size)
    current = int(np.argmax(f_one))
    chosen = [current]
    best_f = float(f_one[current])
    acc_inter, acc_sizes = inter[current], sizes[current]
    remaining = [s for s in range(n) if s != current]
    while remaining:
        fs = [2.0 * (acc_inter + inter[s]) / (acc_sizes + sizes[s] + fg_size) for s in remaining]
        pick = int(np.argmax(fs))
        if fs[pick] <= best_f:
            break
        best_f = float(fs[pick])
        s = remaining.pop(pick)
        chosen.append(s)
        acc_inter += inter[s]
        acc_sizes += sizes[s]
    return FMultiResult(f=best_f, subset=tuple(sorted(chosen)), method="greedy")


def f_frag(result: FMultiResult) -> int:
    """Fragmentation of the best union: segment count minus one."""
    return len(result.subset) - 1


def evaluate(lm: LabelMap, masks, exact_limit: int = EXACT_LIMIT) -> EvalReport:
    """Score a label map against 1..3 annotator masks; report each + mean."""
    if isinstance(masks, BinaryMask):
        masks = [masks]
    if not masks:
        raise ValueError("need at least one mask")
    for mask in masks:
        check_same_shape(lm, mask)
    segments = segment_sets(lm)
    per = []
    for mask in masks:
        single = f_single(segments, mask)
        multi = f_multi(segments, mask, exact_limit=exact_limit)
        per.append(
            AnnotatorScores(
                f_single=single,
                f_multi=multi.f,
                f_frag=f_frag(multi),
                subset=multi.subset,
                method=multi.method,
            )
        )
    return EvalReport(
        per_annotator=per,
        mean_f_single=float(np.mean([a.f_single for a in per])),
        mean_f_multi=float(np.mean([a.f_multi for a in per])),
        mean_f_frag=float(np.mean([a.f_frag for a in per])),
    )


def report_to_dict(report: EvalReport) -> dict:
    return {
        "annotators": [
            {
                "f_single": a.f_single,
                "f_multi": a.f_multi,
                "f_frag": a.f_frag,
                "subset_size": len(a.subset),
                "method": a.method,
            }
            for a in report.per_annotator
        ],
        "mean": {
            "f_single": report.mean_f_single,
            "f_multi": report.mean_f_multi,
            "f_frag": report.mean_f_frag,
        },
    }


def aggregate(values):
    """Mean with a 95% normal-approximation half-width (None when n < 2)."""
    arr = np.asarray(values, dtype=np.float64)
    n = arr.size
    mean = float(arr.mean()) if n else None
    if n < 2:
        return {"n": int(n), "mean": mean, "ci95": None}
    half = 1.96 * float(arr.std(ddof=1)) / np.sqrt(n)
    return {"n": int(n), "mean": mean, "ci95": half}
