"""Cost matrices and gated bipartite assignment.

Every matrix here is (tracks, detections). Pairs whose classes differ are
infeasible and carry cost 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .types import BBox, Detection, Track


def iou(a: BBox, b: BBox) -> float:
    ax1, ay1, ax2, ay2 = a.tlbr()
    bx1, by1, bx2, by2 = b.tlbr()
    iw = min(ax2, bx2) - max(ax1, bx1)
    ih = min(ay2, by2) - max(ay1, by1)
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    return inter / (a.w * a.h + b.w * b.h - inter)


def iou_matrix(boxes_a: Sequence[BBox], boxes_b: Sequence[BBox]) -> np.ndarray:
    if not boxes_a or not boxes_b:
        return np.zeros((len(boxes_a), len(boxes_b)))
    a = np.array([bx.tlbr() for bx in boxes_a], dtype=np.float64)
    b = np.array([bx.tlbr() for bx in boxes_b], dtype=np.float64)
    iw = np.minimum(a[:, None, 2], b[None, :, 2]) - np.maximum(a[:, None, 0], b[None, :, 0])
    ih = np.minimum(a[:, None, 3], b[None, :, 3]) - np.maximum(a[:, None, 1], b[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (a[:, 2] - a[:, 0]) * (a[:, 3] - a[:, 1])
    area_b = (b[:, 2] - b[:, 0]) * (b[:, 3] - b[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    return np.clip(inter / union, 0.0, 1.0)


def class_mask(tracks: Sequence[Track], detections: Sequence[Detection]) -> np.ndarray:
    """True where the pair may be matched (same class)."""
    tc = np.array([t.class_id for t in tracks], dtype=np.int64)
    dc = np.array([d.class_id for d in detections], dtype=np.int64)
    return tc[:, None] == dc[None, :]


def iou_cost_matrix(tracks: Sequence[Track], detections: Sequence[Detection]) -> np.ndarray:
    """1 - IoU between the tracks' current Kalman boxes and the detection boxes."""
    cost = 1.0 - iou_matrix([t.bbox for t in tracks], [d.bbox for d in detections])
    if cost.size:
        cost[~class_mask(tracks, detections)] = 1.0
    return cost


def appearance_cost_matrix(tracks: Sequence[Track], detections: Sequence[Detection]) -> np.ndarray:
    """(1 - cosine) / 2 between smoothed track embeddings and detection embeddings."""
    if not tracks or not detections:
        return np.zeros((len(tracks), len(detections)))
    te = np.stack([t.embedding for t in tracks])
    de = np.stack([d.embedding for d in detections])
    cost = np.clip((1.0 - te @ de.T) / 2.0, 0.0, 1.0)
    cost[~class_mask(tracks, detections)] = 1.0
    return cost


def fuse_unified(c_amc, c_iou, c_app) -> np.ndarray:
    c_amc, c_iou, c_app = (np.asarray(c, dtype=np.float64) for c in (c_amc, c_iou, c_app))
    if not (c_amc.shape == c_iou.shape == c_app.shape):
        raise ValueError(f"cost shapes differ: {c_amc.shape}, {c_iou.shape}, {c_app.shape}")
    # same as 1 - (1 - amc*iou)(1 - app), rearranged so small costs keep full relative precision
    motion = c_amc * c_iou
    return c_app + motion * (1.0 - c_app)


@dataclass
class AssignmentResult:
    matches: list[tuple[int, int]] = field(default_factory=list)
    unmatched_rows: list[int] = field(default_factory=list)
    unmatched_cols: list[int] = field(default_factory=list)


def solve_assignment(cost, gate: float) -> AssignmentResult:
    """Min-cost matching among maximum-cardinality matchings using only entries <= gate."""
    c = np.asarray(cost, dtype=np.float64)
    if c.ndim != 2:
        raise ValueError(f"cost must be 2-D, got shape {c.shape}")
    m, n = c.shape
    if m == 0 or n == 0:
        return AssignmentResult([], list(range(m)), list(range(n)))
    feasible = c <= gate
    if not feasible.any():
        return AssignmentResult([], list(range(m)), list(range(n)))
    vals = c[feasible]
    # one more feasible pair must always outweigh any cost difference among feasible pairs
    big = (float(vals.max() - vals.min()) + 1.0) * (min(m, n) + 1)
    work = np.where(feasible, c - vals.min(), big)
    rows, cols = linear_sum_assignment(work)
    matches = [(int(r), int(k)) for r, k in zip(rows, cols) if feasible[r, k]]
    mr = {r for r, _ in matches}
    mc = {k for _, k in matches}
    return AssignmentResult(
        matches,
        [r for r in range(m) if r not in mr],
        [k for k in range(n) if k not in mc],
    )
