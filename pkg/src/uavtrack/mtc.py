"""Detection-free continuation of briefly unmatched tracks.

A track that fell through both association stages but was tracked on each of
the last few frames is kept alive on its Kalman prediction when the appearance
peak in the current feature map agrees with that prediction and no detection
already covers the predicted box.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .amc import UnitCells
from .association import iou
from .types import BBox, Detection, Track, TrackerConfig


@dataclass(frozen=True)
class ReactivationCandidate:
    track_id: int
    box_kf: BBox
    c_kf: tuple[float, float]
    c_reid: tuple[float, float]
    d_k: float


@dataclass(frozen=True)
class Reactivate:
    box: BBox


@dataclass(frozen=True)
class StayLost:
    reason: str


def _has_recent_run(track: Track, current_frame: int, min_len: int) -> bool:
    buf = list(track.buffer)
    if len(buf) < min_len or not buf:
        return False
    if buf[-1].frame != current_frame - 1:
        return False
    tail = [s.frame for s in buf[len(buf) - min_len:]]
    return all(b - a == 1 for a, b in zip(tail, tail[1:]))


def select_candidates(unmatched_tracks: Iterable[Track], current_frame: int,
                      cfg: TrackerConfig) -> list[Track]:
    return [
        t for t in unmatched_tracks
        if t.consecutive_reactivations < cfg.reactivation_cap
        and _has_recent_run(t, current_frame, max(cfg.mtc_min_consecutive, 1))
    ]


def latest_embedding(track: Track) -> np.ndarray:
    return track.buffer[-1].embedding if track.buffer else track.embedding


def mtc_distance(track: Track, fm_t) -> ReactivationCandidate:
    """Offset between the Kalman-predicted center and the appearance peak.

    ``track.kf_state`` must already hold this frame's prediction.
    """
    cells = fm_t if isinstance(fm_t, UnitCells) else UnitCells(fm_t)
    box_kf = track.kf_state.bbox()
    c_kf = box_kf.center
    peak = cells.peaks(latest_embedding(track))[0]
    c_reid = (float(peak[0]), float(peak[1]))
    d_k = math.hypot(c_reid[0] - c_kf[0], c_reid[1] - c_kf[1])
    return ReactivationCandidate(track.id, box_kf, c_kf, c_reid, d_k)


def decide_reactivation(cand: ReactivationCandidate, detections: Sequence[Detection],
                        cfg: TrackerConfig, class_id: int | None = None):
    if not cand.d_k < cfg.lambda_mtc:
        return StayLost(f"centers disagree by {cand.d_k:.3f} cells")
    overlap = max(
        (iou(cand.box_kf, d.bbox) for d in detections if class_id is None or d.class_id == class_id),
        default=0.0,
    )
    if not overlap < cfg.mtc_overlap_gate:
        return StayLost(f"detection overlaps prediction (IoU {overlap:.3f})")
    return Reactivate(cand.box_kf)
