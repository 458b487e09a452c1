import numpy as np
import pytest

from uavtrack.amc import UnitCells
from uavtrack.simgen import (
    ScenarioSpec, center_cell, decode_detections, generate, identity_embeddings, subsample,
)
from uavtrack.types import ConfigError, FeatureMap, GridGeometry

SMALL = dict(height=40, width=64, embed_dim=16)


def test_same_seed_bit_identical():
    spec = ScenarioSpec(seed=9, num_objects=4, num_frames=10, dropout=0.2, clutter_rate=1.0,
                        embedding_noise=0.05, camera_amplitude=1.0, **SMALL)
    a, b = generate(spec), generate(spec)
    for (da, fa), (db, fb) in zip(a.frames(), b.frames()):
        assert fa.values.tobytes() == fb.values.tobytes()
        assert [(d.bbox, d.confidence, d.embedding.tobytes()) for d in da] == \
               [(d.bbox, d.confidence, d.embedding.tobytes()) for d in db]
    assert a.manifest == b.manifest


def test_different_seed_differs():
    a = generate(ScenarioSpec(seed=1, num_objects=3, num_frames=2, **SMALL))
    b = generate(ScenarioSpec(seed=2, num_objects=3, num_frames=2, **SMALL))
    assert a.gt[0].boxes[0] != b.gt[0].boxes[0]


def test_zero_noise_fidelity():
    spec = ScenarioSpec(seed=4, num_objects=5, num_frames=30, size_min=3, size_max=4,
                        camera_amplitude=0.5, **SMALL)
    b = generate(spec)
    checked = 0
    for t, (dets, fm) in enumerate(b.frames()):
        assert [d.bbox for d in dets] == [g.boxes[t] for g in b.gt]
        boxes = [g.boxes[t].tlbr() for g in b.gt]
        cells = UnitCells(fm)
        for i, d in enumerate(dets):
            others = [o for j, o in enumerate(boxes) if j != i]
            a = d.bbox.tlbr()
            if any(min(a[2], o[2]) > max(a[0], o[0]) and min(a[3], o[3]) > max(a[1], o[1]) for o in others):
                continue  # overlapping plants are additive; fidelity only holds when apart
            assert tuple(cells.peaks(d.embedding)[0]) == center_cell(d.bbox, b.geometry)
            checked += 1
    assert checked > 100


def test_center_cell_holds_embedding():
    b = generate(ScenarioSpec(seed=8, num_objects=1, num_frames=1, **SMALL))
    (dets, fm), = b.frames()
    x, y = center_cell(dets[0].bbox, b.geometry)
    np.testing.assert_allclose(fm.values[y, x], dets[0].embedding, atol=1e-6)


def test_background_norm_bound():
    b = generate(ScenarioSpec(seed=8, num_objects=1, num_frames=1, dropout=1.0, **SMALL))
    (dets, fm), = b.frames()
    assert dets == []
    norms = np.linalg.norm(fm.values, axis=2)
    assert norms.max() <= 0.1 + 1e-6 and norms.min() > 0


def test_dropout_one_is_background_only():
    spec = ScenarioSpec(seed=3, num_objects=3, num_frames=5, dropout=1.0, **SMALL)
    for dets, fm in generate(spec).frames():
        assert dets == [] and np.linalg.norm(fm.values, axis=2).max() <= 0.1 + 1e-6


def test_dropout_rate():
    spec = ScenarioSpec(seed=21, num_objects=2, num_frames=1000, dropout=0.3, **SMALL)
    b = generate(spec)
    emitted = sum(len(d) for d in b.detections)
    assert abs(1 - emitted / 2000 - 0.3) <= 0.02


def test_clamping_under_max_camera_motion():
    # largest camera amplitude the grid admits for these sizes
    spec = ScenarioSpec(seed=6, num_objects=8, num_frames=200, camera_amplitude=2.5, speed_max=3.0,
                        camera_freq_min=0.6, **SMALL)
    for g in generate(spec).gt:
        for box in g.boxes.values():
            x1, y1, x2, y2 = box.tlbr()
            assert 0 <= x1 and x2 <= 64 and 0 <= y1 and y2 <= 40
            assert 0 <= box.cx < 64 and 0 <= box.cy < 40


def test_spec_validation():
    with pytest.raises(ConfigError):
        ScenarioSpec(seed=1, num_objects=0)
    with pytest.raises(ConfigError):
        ScenarioSpec(seed=1, num_frames=0)
    with pytest.raises(ConfigError):
        ScenarioSpec(seed=1, dropout=1.5)
    with pytest.raises(ConfigError, match="seed"):
        ScenarioSpec.from_mapping({"num_objects": "3"})
    with pytest.raises(ConfigError, match="bogus"):
        ScenarioSpec.from_mapping({"seed": "1", "bogus": "2"})


def test_spec_round_trip():
    spec = ScenarioSpec(seed=5, dropout=0.25, motion="turning", dropout_keeps_features=True)
    assert ScenarioSpec.from_mapping(spec.to_mapping()) == spec


def test_distractor_similarity(rng):
    e = identity_embeddings(rng, 4, 32, 0.7)
    assert e[0] @ e[1] == pytest.approx(0.7, abs=1e-12)
    assert e[2] @ e[3] == pytest.approx(0.7, abs=1e-12)
    np.testing.assert_allclose(np.linalg.norm(e, axis=1), 1.0, atol=1e-12)


def test_subsample():
    b = generate(ScenarioSpec(seed=2, num_objects=2, num_frames=10, **SMALL))
    assert subsample(b, 1).records == b.records
    s = subsample(b, 2)
    assert s.num_frames == 5
    for g, gs in zip(b.gt, s.gt):
        assert [gs.boxes[i] for i in range(5)] == [g.boxes[2 * i] for i in range(5)]
    assert sorted(s.gt_frames()) == list(range(5))
    with pytest.raises(ValueError):
        subsample(b, 11)
    with pytest.raises(ValueError):
        subsample(b, 0)


def _decode_setup(geom):
    emb = FeatureMap(geom, np.ones((geom.height, geom.width, geom.embed_dim)))
    reg = np.full((geom.height, geom.width, 2), 3.0)
    return emb, reg


def test_decode_single_peak(small_geom):
    emb, reg = _decode_setup(small_geom)
    hm = np.zeros((24, 32))
    hm[5, 7] = 0.9
    (d,) = decode_detections(hm, reg, emb, 0.4)
    assert (d.bbox.cx, d.bbox.cy, d.bbox.w, d.confidence) == (7.0, 5.0, 3.0, 0.9)


def test_decode_below_threshold(small_geom):
    emb, reg = _decode_setup(small_geom)
    assert decode_detections(np.full((24, 32), 0.4), reg, emb, 0.4) == []


def test_decode_suppresses_neighbor(small_geom):
    emb, reg = _decode_setup(small_geom)
    hm = np.zeros((24, 32))
    hm[5, 7], hm[5, 8] = 0.9, 0.8
    assert [(d.bbox.cx, d.confidence) for d in decode_detections(hm, reg, emb, 0.4)] == [(7.0, 0.9)]


def test_decode_geometry_mismatch(small_geom):
    emb, reg = _decode_setup(small_geom)
    with pytest.raises(ValueError):
        decode_detections(np.zeros((10, 10)), reg, emb, 0.4)
