import math

import numpy as np
import pytest

from uavtrack import mtc
from uavtrack.kalman import kf_init
from uavtrack.types import BBox, Track, TrackerConfig

from conftest import det, planted_map, random_unit


def _track(frames, box=BBox(10, 10, 4, 4), emb=None, dim=8, reactivations=0):
    emb = np.eye(dim)[0] if emb is None else emb
    t = Track(1, 0, kf_init(box), emb, consecutive_reactivations=reactivations)
    for f in frames:
        t.push_snapshot(f, box)
    return t


@pytest.mark.parametrize("frames, now, expected", [
    ([5, 6, 7], 8, True),
    ([2, 3, 7], 8, False),
    ([4, 5, 6], 8, False),  # most recent snapshot two frames old
    ([6, 7], 8, False),  # too short
    ([1, 2, 3, 5, 6, 7], 8, True),  # only the tail run counts
])
def test_candidate_rule(frames, now, expected):
    t = _track(frames)
    assert (mtc.select_candidates([t], now, TrackerConfig()) == [t]) is expected


def test_candidate_cap():
    cfg = TrackerConfig()
    assert mtc.select_candidates([_track([5, 6, 7], reactivations=5)], 8, cfg) == []
    assert len(mtc.select_candidates([_track([5, 6, 7], reactivations=4)], 8, cfg)) == 1


def test_distance_coincident(small_geom):
    e = np.eye(8)[2]
    t = _track([0], box=BBox(10, 10, 4, 4), emb=e)
    cand = mtc.mtc_distance(t, planted_map(small_geom, [(10, 10, e)]))
    assert cand.d_k == 0.0 and cand.c_reid == (10.0, 10.0)


def test_distance_345(small_geom):
    e = np.eye(8)[2]
    t = _track([0], box=BBox(10, 10, 4, 4), emb=e)
    cand = mtc.mtc_distance(t, planted_map(small_geom, [(13, 14, e)]))
    assert cand.c_kf == (10.0, 10.0)
    assert cand.d_k == 5.0


def test_distance_random(small_geom, rng):
    for _ in range(50):
        e = random_unit(rng, 8)
        kx, ky = rng.uniform(2, 28), rng.uniform(2, 20)
        px, py = int(rng.integers(0, 32)), int(rng.integers(0, 24))
        t = _track([0], box=BBox(kx, ky, 3, 3), emb=e)
        cand = mtc.mtc_distance(t, planted_map(small_geom, [(px, py, e)], rng, background=0.05))
        assert cand.c_reid == (px, py)
        assert cand.d_k == pytest.approx(math.sqrt((px - kx) ** 2 + (py - ky) ** 2), abs=1e-9)


def test_distance_uses_latest_buffer_embedding(small_geom):
    a, b = np.eye(8)[0], np.eye(8)[1]
    t = _track([0], emb=a)
    t.embedding = b  # smoothed embedding drifted, buffer still holds a
    fm = planted_map(small_geom, [(10, 10, a), (20, 5, b)])
    assert mtc.mtc_distance(t, fm).c_reid == (10.0, 10.0)


def _cand(d_k, box=BBox(10, 10, 4, 4)):
    return mtc.ReactivationCandidate(1, box, box.center, (box.cx + d_k, box.cy), d_k)


def test_decide_examples():
    cfg = TrackerConfig()
    assert mtc.decide_reactivation(_cand(0.0), [], cfg) == mtc.Reactivate(BBox(10, 10, 4, 4))
    assert isinstance(mtc.decide_reactivation(_cand(10.0), [], cfg), mtc.StayLost)
    assert isinstance(mtc.decide_reactivation(_cand(3.0), [], cfg), mtc.StayLost)  # strict <
    # IoU of a 4x4 box with the same box shifted by 0.2 cells is 3.8/4.2 ~ 0.905
    overlap = [det(10.2, 10, 4, 4)]
    assert isinstance(mtc.decide_reactivation(_cand(2.0), overlap, cfg), mtc.StayLost)
    # other-class detections do not block
    other = [det(10.2, 10, 4, 4, cls=3)]
    assert isinstance(mtc.decide_reactivation(_cand(2.0), other, cfg, class_id=0), mtc.Reactivate)


def test_decide_deterministic(rng):
    cfg = TrackerConfig()
    for _ in range(100):
        c = _cand(float(rng.uniform(0, 6)))
        dets = [det(*rng.uniform(5, 15, 2)) for _ in range(3)]
        assert mtc.decide_reactivation(c, dets, cfg) == mtc.decide_reactivation(c, dets, cfg)
