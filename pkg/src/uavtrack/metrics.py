"""CLEAR-MOT and identity metrics (MOTA, IDF1, MT, ML, IDs, FP, FN).

Inputs are per-frame mappings ``{frame: [(object_id, BBox), ...]}`` with boxes
in a common coordinate space. Matching is class-agnostic at IoU >= 0.5.
"""

from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .association import iou_matrix, solve_assignment
from .types import BBox

log = logging.getLogger(__name__)

IOU_THRESHOLD = 0.5
MOSTLY_TRACKED = 0.8
MOSTLY_LOST = 0.2

FrameBoxes = Sequence[tuple[int, BBox]]
Frames = Mapping[int, FrameBoxes]


class MetricsError(ValueError):
    pass


@dataclass
class GroundTruthTrack:
    gt_id: int
    class_id: int
    boxes: dict[int, BBox] = field(default_factory=dict)

    def __post_init__(self):
        frames = list(self.boxes)
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError(f"GT track {self.gt_id}: frame indices must be strictly increasing")


@dataclass
class FrameMatch:
    matches: list[tuple[int, int]]  # (gt_id, pred_id)
    fp: list[int]  # unmatched prediction ids
    fn: list[int]  # unmatched gt ids


@dataclass
class MetricsReport:
    mota: float
    idf1: float
    mt: int
    ml: int
    ids: int
    fp: int
    fn: int
    gt_count: int
    num_gt_tracks: int = 0
    idtp: int = 0
    idfp: int = 0
    idfn: int = 0

    @property
    def mt_ratio(self) -> float:
        return self.mt / self.num_gt_tracks if self.num_gt_tracks else 0.0

    @property
    def ml_ratio(self) -> float:
        return self.ml / self.num_gt_tracks if self.num_gt_tracks else 0.0

    def to_key_values(self) -> str:
        lines = []
        for k, v in asdict(self).items():
            lines.append(f"{k}={v:.6f}" if isinstance(v, float) else f"{k}={v}")
        return "\n".join(lines) + "\n"

    def to_table(self) -> str:
        heads = ["IDF1", "MOTA", "MT", "ML", "IDs", "FP", "FN", "GT"]
        vals = [f"{100 * self.idf1:.1f}", f"{100 * self.mota:.1f}", str(self.mt), str(self.ml),
                str(self.ids), str(self.fp), str(self.fn), str(self.gt_count)]
        widths = [max(len(h), len(v)) for h, v in zip(heads, vals)]
        row = lambda cells: "  ".join(c.rjust(w) for c, w in zip(cells, widths))
        return row(heads) + "\n" + row(vals) + "\n"


def clear_match(gt_frame: FrameBoxes, pred_frame: FrameBoxes,
                previous: Mapping[int, int] | None = None) -> FrameMatch:
    """Match one frame, keeping last frame's gt->pred pairs that still overlap.

    ``previous`` maps gt_id to the pred_id it was matched with in the prior frame.
    """
    previous = previous or {}
    gt_ids = [g for g, _ in gt_frame]
    pr_ids = [p for p, _ in pred_frame]
    ious = iou_matrix([b for _, b in gt_frame], [b for _, b in pred_frame])
    pr_index = {p: k for k, p in enumerate(pr_ids)}

    matches: list[tuple[int, int]] = []
    used_g, used_p = set(), set()
    for gi, g in enumerate(gt_ids):
        p = previous.get(g)
        pk = pr_index.get(p) if p is not None else None
        if pk is not None and pk not in used_p and ious[gi, pk] >= IOU_THRESHOLD:
            matches.append((g, p))
            used_g.add(gi)
            used_p.add(pk)

    rest_g = [i for i in range(len(gt_ids)) if i not in used_g]
    rest_p = [k for k in range(len(pr_ids)) if k not in used_p]
    if rest_g and rest_p:
        sub = 1.0 - ious[np.ix_(rest_g, rest_p)]
        res = solve_assignment(sub, 1.0 - IOU_THRESHOLD)
        for r, c in res.matches:
            matches.append((gt_ids[rest_g[r]], pr_ids[rest_p[c]]))
            used_g.add(rest_g[r])
            used_p.add(rest_p[c])

    fp = [pr_ids[k] for k in range(len(pr_ids)) if k not in used_p]
    fn = [gt_ids[i] for i in range(len(gt_ids)) if i not in used_g]
    return FrameMatch(matches, fp, fn)


def _frames(gt: Frames, pred: Frames) -> list[int]:
    return sorted(set(gt) | set(pred))


def compute_clear(gt: Frames, pred: Frames) -> dict:
    """FP, FN, IDs, MOTA, MT and ML over a sequence."""
    total_gt = sum(len(v) for v in gt.values())
    if total_gt == 0:
        raise MetricsError("ground truth is empty; MOTA is undefined")
    fp = fn = ids = 0
    last_match: dict[int, int] = {}  # gt -> pred, most recent match at any earlier frame
    prev_frame: dict[int, int] = {}  # gt -> pred, matches of the immediately preceding frame
    lifespan: dict[int, int] = {}
    tracked: dict[int, int] = {}
    for f in _frames(gt, pred):
        gf, pf = gt.get(f, ()), pred.get(f, ())
        fm = clear_match(gf, pf, prev_frame)
        fp += len(fm.fp)
        fn += len(fm.fn)
        for g, _ in gf:
            lifespan[g] = lifespan.get(g, 0) + 1
        cur = {}
        for g, p in fm.matches:
            tracked[g] = tracked.get(g, 0) + 1
            if g in last_match and last_match[g] != p:
                ids += 1
            last_match[g] = p
            cur[g] = p
        prev_frame = cur
    mt = sum(1 for g, n in lifespan.items() if tracked.get(g, 0) >= MOSTLY_TRACKED * n)
    ml = sum(1 for g, n in lifespan.items() if tracked.get(g, 0) <= MOSTLY_LOST * n)
    return {
        "mota": 1.0 - (fn + fp + ids) / total_gt,
        "fp": fp, "fn": fn, "ids": ids, "mt": mt, "ml": ml,
        "gt_count": total_gt, "num_gt_tracks": len(lifespan),
    }


def compute_mota(gt: Frames, pred: Frames) -> float:
    return compute_clear(gt, pred)["mota"]


def colocation_counts(gt: Frames, pred: Frames) -> tuple[list[int], list[int], np.ndarray]:
    """Frames in which each (gt id, pred id) pair overlaps at IoU >= 0.5."""
    gt_ids = sorted({g for v in gt.values() for g, _ in v})
    pr_ids = sorted({p for v in pred.values() for p, _ in v})
    gi = {g: i for i, g in enumerate(gt_ids)}
    pi = {p: i for i, p in enumerate(pr_ids)}
    counts = np.zeros((len(gt_ids), len(pr_ids)), dtype=np.int64)
    for f in _frames(gt, pred):
        gf, pf = gt.get(f, ()), pred.get(f, ())
        if not gf or not pf:
            continue
        hit = iou_matrix([b for _, b in gf], [b for _, b in pf]) >= IOU_THRESHOLD
        for a, b in zip(*np.nonzero(hit)):
            counts[gi[gf[a][0]], pi[pf[b][0]]] += 1
    return gt_ids, pr_ids, counts


def identity_scores(gt: Frames, pred: Frames) -> tuple[int, int, int]:
    """(IDTP, IDFP, IDFN) under the best one-to-one gt<->pred id assignment."""
    n_gt = sum(len(v) for v in gt.values())
    n_pr = sum(len(v) for v in pred.values())
    _, _, counts = colocation_counts(gt, pred)
    idtp = 0
    if counts.size:
        # maximizing IDTP is the same as minimizing IDFP + IDFN
        rows, cols = linear_sum_assignment(-counts)
        idtp = int(counts[rows, cols].sum())
    return idtp, n_pr - idtp, n_gt - idtp


def compute_idf1(gt: Frames, pred: Frames) -> float:
    idtp, idfp, idfn = identity_scores(gt, pred)
    denom = 2 * idtp + idfp + idfn
    if denom == 0:
        log.info("IDF1 with no ground truth and no predictions; returning 1 by convention")
        return 1.0
    return 2 * idtp / denom


def evaluate(gt: Frames, pred: Frames) -> MetricsReport:
    clear = compute_clear(gt, pred)
    idtp, idfp, idfn = identity_scores(gt, pred)
    denom = 2 * idtp + idfp + idfn
    return MetricsReport(
        mota=clear["mota"],
        idf1=2 * idtp / denom if denom else 1.0,
        mt=clear["mt"], ml=clear["ml"], ids=clear["ids"],
        fp=clear["fp"], fn=clear["fn"], gt_count=clear["gt_count"],
        num_gt_tracks=clear["num_gt_tracks"],
        idtp=idtp, idfp=idfp, idfn=idfn,
    )
