"""Per-frame two-stage tracking pipeline and sequence driver."""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from . import mtc
from .amc import UnitCells, amc_matrix, bidirectional_distances
from .association import (
    appearance_cost_matrix,
    class_mask,
    fuse_unified,
    iou_cost_matrix,
    solve_assignment,
)
from .kalman import kf_init, kf_predict, kf_update
from .types import BBox, Detection, FeatureMap, Track, TrackerConfig, TrackStatus

class Provenance(enum.Enum):
    MATCHED = "matched"
    REACTIVATED = "reactivated"


@dataclass(frozen=True)
class TrackOutput:
    track_id: int
    class_id: int
    bbox: BBox  # image pixels
    confidence: float
    provenance: Provenance


@dataclass
class FrameResult:
    frame: int
    outputs: list[TrackOutput] = field(default_factory=list)


class FrameError(RuntimeError):
    def __init__(self, frame: int, cause: Exception):
        super().__init__(f"frame {frame}: {cause}")
        self.frame = frame
        self.cause = cause


class Tracker:
    """Online tracker holding the live track set and the previous frame's features.

    Call :meth:`step` once per frame, in order.
    """

    def __init__(self, cfg: TrackerConfig | None = None):
        self.cfg = cfg or TrackerConfig()
        self.tracks: list[Track] = []
        self.removed_ids: set[int] = set()
        self._next_id = 1
        self._prev_cells: UnitCells | None = None
        self._geometry = None

    # stage 1 cost, honoring the ablation switches
    def _stage1_cost(self, tracks, dets, prev_centers, cells) -> np.ndarray:
        cfg = self.cfg
        m, n = len(tracks), len(dets)
        # a disabled motion cue is the identity (1) of the product term;
        # with both disabled the motion term is 0 and only appearance remains
        c_iou = iou_cost_matrix(tracks, dets) if cfg.use_iou else np.ones((m, n))
        c_amc = np.ones((m, n))
        if cfg.use_amc and self._prev_cells is not None:
            d_f, d_b = bidirectional_distances(
                np.stack([t.embedding for t in tracks]),
                prev_centers,
                np.stack([d.embedding for d in dets]),
                np.array([d.bbox.center for d in dets]),
                cells,
                self._prev_cells,
            )
            c_amc = amc_matrix(d_f, d_b, cfg.sigma)
        if not cfg.use_iou and not cfg.use_amc:
            c_amc = np.zeros((m, n))
        c_app = appearance_cost_matrix(tracks, dets) if cfg.use_app else np.zeros((m, n))
        cost = fuse_unified(c_amc, c_iou, c_app)
        cost[~class_mask(tracks, dets)] = 1.0
        return cost

    def step(self, detections: Sequence[Detection], fm_t: FeatureMap, frame: int) -> FrameResult:
        cfg = self.cfg
        if self._geometry is not None and self._geometry != fm_t.geometry:
            raise ValueError(f"feature map geometry changed: {self._geometry} -> {fm_t.geometry}")
        self._geometry = fm_t.geometry
        # normalized cells are only needed by the AMC and MTC cues
        cells = UnitCells(fm_t) if cfg.use_amc or cfg.use_mtc else None
        stride = fm_t.geometry.stride

        # (1) predict; remember where each track was before this frame
        pool = [t for t in self.tracks if t.status in (TrackStatus.ACTIVE, TrackStatus.LOST)]
        prev_centers = np.array([t.kf_state.center for t in pool]).reshape(-1, 2)
        for t in pool:
            t.kf_state = kf_predict(t.kf_state)

        # (2) confidence split
        d_high = [d for d in detections if d.confidence >= cfg.conf_high]
        d_low = [d for d in detections if cfg.conf_low <= d.confidence < cfg.conf_high]

        matched: list[tuple[Track, Detection]] = []

        # (3) stage 1: all live tracks vs high-confidence detections
        unmatched_rows = list(range(len(pool)))
        unmatched_high = list(range(len(d_high)))
        if pool and d_high:
            cost = self._stage1_cost(pool, d_high, prev_centers, cells)
            res = solve_assignment(cost, cfg.gate_stage1)
            matched += [(pool[r], d_high[c]) for r, c in res.matches]
            unmatched_rows, unmatched_high = res.unmatched_rows, res.unmatched_cols

        # (4) stage 2: leftovers vs low-confidence detections, IoU only
        t_un = [pool[r] for r in unmatched_rows]
        t_second_un = t_un
        if t_un and d_low:
            res = solve_assignment(iou_cost_matrix(t_un, d_low), cfg.gate_stage2)
            matched += [(t_un[r], d_low[c]) for r, c in res.matches]
            t_second_un = [t_un[r] for r in res.unmatched_rows]

        # (5) motion-aware continuation
        reactivated: list[tuple[Track, BBox]] = []
        if cfg.use_mtc and t_second_un:
            for t in mtc.select_candidates(t_second_un, frame, cfg):
                cand = mtc.mtc_distance(t, cells)
                decision = mtc.decide_reactivation(cand, detections, cfg, class_id=t.class_id)
                if isinstance(decision, mtc.Reactivate):
                    reactivated.append((t, decision.box))
        reactivated_ids = {t.id for t, _ in reactivated}

        # (6) measurement update for matches, everything else is lost
        outputs: list[TrackOutput] = []
        for t, d in matched:
            t.kf_state = kf_update(t.kf_state, d.bbox)
            e = cfg.embed_momentum * t.embedding + (1.0 - cfg.embed_momentum) * d.embedding
            t.embedding = e / np.linalg.norm(e)
            t.status = TrackStatus.ACTIVE
            t.frames_since_update = 0
            t.consecutive_reactivations = 0
            t.confidence = d.confidence
            t.push_snapshot(frame, d.bbox)
            outputs.append(TrackOutput(t.id, t.class_id, d.bbox.scaled(stride), d.confidence,
                                       Provenance.MATCHED))
        for t, box in reactivated:
            t.status = TrackStatus.ACTIVE
            t.frames_since_update = 0
            t.consecutive_reactivations += 1
            t.push_snapshot(frame, box)
            outputs.append(TrackOutput(t.id, t.class_id, box.scaled(stride), t.confidence,
                                       Provenance.REACTIVATED))
        for t in t_second_un:
            if t.id in reactivated_ids:
                continue
            t.status = TrackStatus.LOST
            t.frames_since_update += 1

        # (7) drop tracks lost for too long
        for t in pool:
            if t.frames_since_update > cfg.max_lost_frames:
                t.status = TrackStatus.REMOVED
                self.removed_ids.add(t.id)
        self.tracks = [t for t in self.tracks if t.status is not TrackStatus.REMOVED]

        # (8) new tracks from unmatched high-confidence detections
        for c in unmatched_high:
            d = d_high[c]
            t = Track(
                id=self._next_id,
                class_id=d.class_id,
                kf_state=kf_init(d.bbox),
                embedding=d.embedding.copy(),
                buffer=deque(maxlen=cfg.buffer_len),
                confidence=d.confidence,
            )
            self._next_id += 1
            # (9) buffer snapshot; matched and reactivated tracks were pushed above
            t.push_snapshot(frame, d.bbox)
            self.tracks.append(t)
            outputs.append(TrackOutput(t.id, t.class_id, d.bbox.scaled(stride), d.confidence,
                                       Provenance.MATCHED))

        self._prev_cells = cells
        outputs.sort(key=lambda o: o.track_id)
        return FrameResult(frame, outputs)


def step(tracker: Tracker, detections, fm_t, frame) -> FrameResult:
    return tracker.step(detections, fm_t, frame)


def run_sequence(frames: Iterable[tuple[Sequence[Detection], FeatureMap]],
                 cfg: TrackerConfig | None = None) -> list[FrameResult]:
    """Track a whole sequence. Detections at or below ``tau_det`` are discarded first."""
    tracker = Tracker(cfg)
    results = []
    for frame, (dets, fm) in enumerate(frames):
        kept = [d for d in dets if d.confidence > tracker.cfg.tau_det]
        try:
            results.append(tracker.step(kept, fm, frame))
        except Exception as exc:
            raise FrameError(frame, exc) from exc
    return results
