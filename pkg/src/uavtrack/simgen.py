"""Synthetic UAV scenarios standing in for a trained detector and ReID network.

Each identity gets a fixed random unit embedding. Per frame the generator moves
objects and the camera, emits detections, and records which embeddings are
planted where. Feature maps are rendered lazily from those records: every cell
of a visible box is ``w * e + (1 - w) * background`` with a Gaussian weight
``w`` that is exactly 1 at the box's center cell, so the center cell holds the
embedding itself and is the unique cosine peak. Background cells are random
vectors of norm at most 0.1.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from . import formats
from .metrics import GroundTruthTrack
from .types import BBox, ConfigError, Detection, FeatureMap, GridGeometry, parse_scalar, unit

MOTIONS = ("constant-velocity", "turning", "random-walk", "mixed")
BACKGROUND_NORM = 0.1


@dataclass(frozen=True)
class ScenarioSpec:
    seed: int
    num_objects: int = 10
    num_frames: int = 100
    height: int = 152
    width: int = 272
    embed_dim: int = 128
    stride: int = 4
    motion: str = "constant-velocity"
    speed_min: float = 0.5
    speed_max: float = 2.0
    turn_rate: float = 0.05  # rad/frame, "turning" objects
    walk_std: float = 0.3  # rad/frame heading noise, "random-walk" objects
    camera_amplitude: float = 0.0  # cells/frame, per axis
    camera_freq_min: float = 0.2  # rad/frame
    camera_freq_max: float = 0.6
    dropout: float = 0.0
    dropout_keeps_features: bool = False
    conf_min: float = 0.6
    conf_max: float = 1.0
    clutter_rate: float = 0.0
    clutter_conf_min: float = 0.41
    clutter_conf_max: float = 0.7
    embedding_noise: float = 0.0
    distractor_similarity: float = 0.0
    size_min: float = 3.0
    size_max: float = 8.0
    num_classes: int = 1

    def __post_init__(self):
        if self.num_objects < 1:
            raise ConfigError("num_objects must be >= 1")
        if self.num_frames < 1:
            raise ConfigError("num_frames must be >= 1")
        GridGeometry(self.height, self.width, self.embed_dim, self.stride)
        for name in ("dropout", "conf_min", "conf_max", "clutter_conf_min", "clutter_conf_max"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {getattr(self, name)}")
        if not -1.0 < self.distractor_similarity < 1.0:
            raise ConfigError("distractor_similarity must be in (-1, 1)")
        if self.motion not in MOTIONS:
            raise ConfigError(f"motion must be one of {MOTIONS}, got {self.motion!r}")
        if not 0 <= self.speed_min <= self.speed_max:
            raise ConfigError("need 0 <= speed_min <= speed_max")
        if not 0 < self.size_min <= self.size_max:
            raise ConfigError("need 0 < size_min <= size_max")
        if min(self.camera_amplitude, self.clutter_rate, self.embedding_noise) < 0:
            raise ConfigError("camera_amplitude, clutter_rate and embedding_noise must be >= 0")
        if not 0 < self.camera_freq_min <= self.camera_freq_max:
            raise ConfigError("need 0 < camera_freq_min <= camera_freq_max")
        if self.num_classes < 1:
            raise ConfigError("num_classes must be >= 1")
        margin = self.size_max / 2 + self.camera_amplitude / self.camera_freq_min + 1
        if 2 * margin >= min(self.width, self.height):
            raise ConfigError("grid too small for the object size and camera motion")

    @property
    def geometry(self) -> GridGeometry:
        return GridGeometry(self.height, self.width, self.embed_dim, self.stride)

    @classmethod
    def from_mapping(cls, items: dict[str, str]) -> "ScenarioSpec":
        known = {f.name: f for f in fields(cls)}
        for key in items:
            if key not in known:
                raise ConfigError(f"unknown scenario key {key!r}")
        if "seed" not in items:
            raise ConfigError("missing required key 'seed'")
        kinds = {"seed": int}
        out = {}
        for key, raw in items.items():
            kind = kinds.get(key) or type(known[key].default)
            try:
                out[key] = parse_scalar(raw, kind)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from None
        return cls(**out)

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioSpec":
        from .types import read_key_values

        return cls.from_mapping(read_key_values(path))

    def to_mapping(self) -> dict[str, str]:
        out = {}
        for k, v in asdict(self).items():
            out[k] = ("true" if v else "false") if isinstance(v, bool) else repr(v) if isinstance(v, float) else str(v)
        return out


@dataclass(frozen=True, eq=False)
class Plant:
    bbox: BBox
    embedding: np.ndarray


@dataclass(eq=False)
class FrameRecord:
    detections: list[Detection]
    plants: list[Plant]
    background_key: int  # per-frame RNG key for the background field


class FeatureMaps(Sequence):
    """Lazily rendered per-frame feature maps of a bundle."""

    def __init__(self, seed: int, geometry: GridGeometry, records: list[FrameRecord], scale: float = 1.0):
        self.seed = seed
        self.geometry = geometry
        self.records = records
        self.scale = scale

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[k] for k in range(*i.indices(len(self)))]
        rec = self.records[i]
        values = render_feature_map(self.geometry, rec.plants, self.seed, rec.background_key)
        if self.scale != 1.0:
            values = values * np.float32(self.scale)
        return FeatureMap(self.geometry, values)


@dataclass(eq=False)
class ScenarioBundle:
    spec: ScenarioSpec | None
    geometry: GridGeometry
    seed: int
    gt: list[GroundTruthTrack]
    records: list[FrameRecord]
    manifest: dict[str, str] = field(default_factory=dict)
    feature_scale: float = 1.0

    @property
    def num_frames(self) -> int:
        return len(self.records)

    @property
    def detections(self) -> list[list[Detection]]:
        return [r.detections for r in self.records]

    @property
    def feature_maps(self) -> FeatureMaps:
        return FeatureMaps(self.seed, self.geometry, self.records, self.feature_scale)

    def frames(self):
        """(detections, feature map) pairs in order, as consumed by the tracker."""
        fms = self.feature_maps
        for i, rec in enumerate(self.records):
            yield rec.detections, fms[i]

    def subsample(self, k: int) -> "ScenarioBundle":
        return subsample(self, k)

    def gt_frames(self, image: bool = True) -> dict[int, list[tuple[int, BBox]]]:
        s = self.geometry.stride if image else 1
        out: dict[int, list[tuple[int, BBox]]] = {}
        for t in self.gt:
            for f, b in t.boxes.items():
                out.setdefault(f, []).append((t.gt_id, b.scaled(s)))
        for v in out.values():
            v.sort(key=lambda p: p[0])
        return out


def background_field(geometry: GridGeometry, seed: int, key: int) -> np.ndarray:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(1, key)))
    g = geometry
    v = rng.standard_normal((g.height, g.width, g.embed_dim), dtype=np.float32)
    norms = rng.uniform(0.5 * BACKGROUND_NORM, BACKGROUND_NORM, size=(g.height, g.width, 1))
    v *= (norms / np.linalg.norm(v, axis=2, keepdims=True)).astype(np.float32)
    return v


def center_cell(b: BBox, geometry: GridGeometry) -> tuple[int, int]:
    x = min(max(int(math.floor(b.cx)), 0), geometry.width - 1)
    y = min(max(int(math.floor(b.cy)), 0), geometry.height - 1)
    return x, y


def _plant_weights(b: BBox, geometry: GridGeometry):
    x0, y0 = center_cell(b, geometry)
    x1, y1, x2, y2 = b.tlbr()
    xs = np.arange(max(int(math.floor(x1)), 0), min(int(math.ceil(x2)), geometry.width))
    ys = np.arange(max(int(math.floor(y1)), 0), min(int(math.ceil(y2)), geometry.height))
    xs = np.union1d(xs, [x0])
    ys = np.union1d(ys, [y0])
    sx, sy = max(b.w / 4.0, 0.5), max(b.h / 4.0, 0.5)
    wx = np.exp(-0.5 * ((xs - x0) / sx) ** 2)
    wy = np.exp(-0.5 * ((ys - y0) / sy) ** 2)
    return ys, xs, np.outer(wy, wx)


def render_feature_map(geometry: GridGeometry, plants: Sequence[Plant], seed: int, key: int) -> np.ndarray:
    out = background_field(geometry, seed, key)
    if not plants:
        return out
    g = geometry
    wsum = np.zeros((g.height, g.width))
    vsum = np.zeros((g.height, g.width, g.embed_dim))
    for p in plants:
        ys, xs, w = _plant_weights(p.bbox, geometry)
        ix = np.ix_(ys, xs)
        wsum[ix] += w
        vsum[ix] += w[..., None] * p.embedding
    # only cells touched by a plant change; the rest keep pure background
    ys, xs = np.nonzero(wsum)
    keep = np.clip(1.0 - wsum[ys, xs], 0.0, None)[:, None]
    out[ys, xs] = (vsum[ys, xs] + keep * out[ys, xs]).astype(np.float32)
    return out


def identity_embeddings(rng: np.random.Generator, n: int, dim: int, similarity: float) -> np.ndarray:
    """Random unit embeddings; odd identities sit at cosine ``similarity`` to their even partner."""
    base = rng.standard_normal((n, dim))
    base /= np.linalg.norm(base, axis=1, keepdims=True)
    if similarity == 0.0:
        return base
    out = base.copy()
    for k in range(1, n, 2):
        partner = out[k - 1]
        orth = base[k] - (base[k] @ partner) * partner
        orth /= np.linalg.norm(orth)
        out[k] = similarity * partner + math.sqrt(1.0 - similarity ** 2) * orth
    return out


def _noisy(rng: np.random.Generator, e: np.ndarray, std: float) -> np.ndarray:
    if std == 0.0:
        return e.copy()
    return unit(e + rng.normal(0.0, std, size=e.shape))


def generate(spec: ScenarioSpec) -> ScenarioBundle:
    g = spec.geometry
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(0,)))
    n = spec.num_objects

    ident = identity_embeddings(rng, n, g.embed_dim, spec.distractor_similarity)
    classes = rng.integers(0, spec.num_classes, size=n)
    sizes = rng.uniform(spec.size_min, spec.size_max, size=(n, 2))
    if spec.motion == "mixed":
        motions = [MOTIONS[i] for i in rng.integers(0, 3, size=n)]
    else:
        motions = [spec.motion] * n
    turn_sign = rng.choice([-1.0, 1.0], size=n)
    speed = rng.uniform(spec.speed_min, spec.speed_max, size=n)
    heading = rng.uniform(0.0, 2 * math.pi, size=n)

    # camera: per-axis sinusoidal offset whose derivative peaks at camera_amplitude
    freq = rng.uniform(spec.camera_freq_min, spec.camera_freq_max, size=2)
    phase = rng.uniform(0.0, 2 * math.pi, size=2)
    cam_reach = spec.camera_amplitude / freq

    def camera(t: int) -> np.ndarray:
        return cam_reach * np.sin(freq * t + phase)

    half = sizes / 2.0
    lo = half + cam_reach.max() + 0.5
    hi = np.array([g.width, g.height], dtype=np.float64) - lo
    pos = rng.uniform(lo, hi)

    gt = [GroundTruthTrack(i + 1, int(classes[i])) for i in range(n)]
    records: list[FrameRecord] = []
    overlaps = 0
    for t in range(spec.num_frames):
        if t > 0:
            for i in range(n):
                if motions[i] == "turning":
                    heading[i] += turn_sign[i] * spec.turn_rate
                elif motions[i] == "random-walk":
                    heading[i] += rng.normal(0.0, spec.walk_std)
            vel = speed[:, None] * np.stack([np.cos(heading), np.sin(heading)], axis=1)
            pos = pos + vel
            # reflect off the world bounds
            for ax in range(2):
                under = pos[:, ax] < lo[:, ax]
                pos[under, ax] = 2 * lo[under, ax] - pos[under, ax]
                over = pos[:, ax] > hi[:, ax]
                pos[over, ax] = 2 * hi[over, ax] - pos[over, ax]
                flip = under | over
                heading[flip] = math.pi - heading[flip] if ax == 0 else -heading[flip]
            pos = np.clip(pos, lo, hi)
        img = pos + camera(t)
        img[:, 0] = np.clip(img[:, 0], half[:, 0], g.width - half[:, 0])
        img[:, 1] = np.clip(img[:, 1], half[:, 1], g.height - half[:, 1])
        img = np.minimum(img, np.array([g.width, g.height]) - 1e-6)

        dets: list[Detection] = []
        plants: list[Plant] = []
        for i in range(n):
            box = BBox(float(img[i, 0]), float(img[i, 1]), float(sizes[i, 0]), float(sizes[i, 1]))
            gt[i].boxes[t] = box
            emb = _noisy(rng, ident[i], spec.embedding_noise)
            dropped = rng.random() < spec.dropout
            conf = rng.uniform(spec.conf_min, spec.conf_max)
            if not dropped:
                dets.append(Detection(box, float(conf), int(classes[i]), emb))
            if not dropped or spec.dropout_keeps_features:
                plants.append(Plant(box, emb))
        for _ in range(rng.poisson(spec.clutter_rate) if spec.clutter_rate > 0 else 0):
            w, h = rng.uniform(spec.size_min, spec.size_max, size=2)
            cx = rng.uniform(w / 2, g.width - w / 2)
            cy = rng.uniform(h / 2, g.height - h / 2)
            box = BBox(float(cx), float(cy), float(w), float(h))
            emb = unit(rng.standard_normal(g.embed_dim))
            conf = rng.uniform(spec.clutter_conf_min, spec.clutter_conf_max)
            dets.append(Detection(box, float(conf), int(rng.integers(0, spec.num_classes)), emb))
            plants.append(Plant(box, emb))
        overlaps += _count_overlaps(plants)
        records.append(FrameRecord(dets, plants, t))

    manifest = {f"spec.{k}": v for k, v in spec.to_mapping().items()}
    manifest.update(_format_manifest(records, overlaps))
    return ScenarioBundle(spec, g, spec.seed, gt, records, manifest)


def _count_overlaps(plants: Sequence[Plant]) -> int:
    boxes = [p.bbox.tlbr() for p in plants]
    count = 0
    for a in range(len(boxes)):
        for b in range(a + 1, len(boxes)):
            A, B = boxes[a], boxes[b]
            if min(A[2], B[2]) > max(A[0], B[0]) and min(A[3], B[3]) > max(A[1], B[1]):
                count += 1
    return count


def _format_manifest(records: Sequence[FrameRecord], overlaps: int) -> dict[str, str]:
    return {
        "format.version": "1",
        "format.gt": "motchallenge-gt",
        "format.detections": "motchallenge-det",
        "format.embeddings": formats.EMB_MAGIC.decode(),
        "format.feature_map": formats.FMP_MAGIC.decode(),
        "num_frames": str(len(records)),
        "num_detections": str(sum(len(r.detections) for r in records)),
        "overlapping_plants": str(overlaps),
    }


def scripted_bundle(boxes: dict[int, Sequence[BBox | None]], geometry: GridGeometry, seed: int,
                    dropped: set[tuple[int, int]] = frozenset(), confidence: float = 0.9,
                    embedding_similarity: float = 0.0) -> ScenarioBundle:
    """Bundle from hand-written trajectories (``None`` marks absence).

    ``dropped`` holds ``(object_id, frame)`` pairs whose detection is withheld
    while the object stays planted in the feature map. Embeddings are noise-free.
    """
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(2,)))
    ids = sorted(boxes)
    ident = identity_embeddings(rng, len(ids), geometry.embed_dim, embedding_similarity)
    n_frames = max(len(v) for v in boxes.values())
    gt = [GroundTruthTrack(oid, 0) for oid in ids]
    records = []
    overlaps = 0
    for t in range(n_frames):
        dets, plants = [], []
        for k, oid in enumerate(ids):
            seq = boxes[oid]
            box = seq[t] if t < len(seq) else None
            if box is None:
                continue
            gt[k].boxes[t] = box
            plants.append(Plant(box, ident[k]))
            if (oid, t) not in dropped:
                dets.append(Detection(box, confidence, 0, ident[k].copy()))
        overlaps += _count_overlaps(plants)
        records.append(FrameRecord(dets, plants, t))
    manifest = {"spec.seed": str(seed), "spec.scripted": "true"}
    manifest.update(_format_manifest(records, overlaps))
    return ScenarioBundle(None, geometry, seed, gt, records, manifest)


def subsample(bundle: ScenarioBundle, k: int) -> ScenarioBundle:
    """Keep frames 0, k, 2k, ... and renumber them consecutively."""
    if k < 1:
        raise ValueError(f"interval must be >= 1, got {k}")
    if k > bundle.num_frames:
        raise ValueError(f"interval {k} exceeds sequence length {bundle.num_frames}")
    keep = list(range(0, bundle.num_frames, k))
    remap = {old: new for new, old in enumerate(keep)}
    gt = [
        GroundTruthTrack(t.gt_id, t.class_id, {remap[f]: b for f, b in t.boxes.items() if f in remap})
        for t in bundle.gt
    ]
    gt = [t for t in gt if t.boxes]
    manifest = dict(bundle.manifest, interval=str(k), num_frames=str(len(keep)))
    return replace(bundle, gt=gt, records=[bundle.records[f] for f in keep], manifest=manifest)


def decode_detections(heatmap: np.ndarray, regmap: np.ndarray, embmap: FeatureMap,
                      tau: float) -> list[Detection]:
    """Heatmap peaks above ``tau`` that are strict 3x3 local maxima, one detection each."""
    heatmap = np.asarray(heatmap, dtype=np.float64)
    if heatmap.ndim == 2:
        heatmap = heatmap[..., None]
    g = embmap.geometry
    if heatmap.shape[:2] != (g.height, g.width) or regmap.shape != (g.height, g.width, 2):
        raise ValueError(f"geometry mismatch: heatmap {heatmap.shape}, regmap {regmap.shape}, grid {g}")
    out: list[Detection] = []
    for c in range(heatmap.shape[2]):
        hm = heatmap[..., c]
        padded = np.pad(hm, 1, constant_values=-np.inf)
        neigh = np.stack([
            padded[1 + dy:1 + dy + g.height, 1 + dx:1 + dx + g.width]
            for dy in (-1, 0, 1) for dx in (-1, 0, 1) if (dy, dx) != (0, 0)
        ])
        peaks = (hm > tau) & (hm > neigh.max(axis=0))
        for y, x in zip(*np.nonzero(peaks)):
            w, h = float(regmap[y, x, 0]), float(regmap[y, x, 1])
            out.append(Detection.create(BBox(float(x), float(y), w, h), float(hm[y, x]), c,
                                        embmap.values[y, x]))
    return out


def write_bundle(bundle: ScenarioBundle, out_dir: str | Path) -> Path:
    out = Path(out_dir)
    (out / "fmaps").mkdir(parents=True, exist_ok=True)
    g = bundle.geometry
    formats.write_gt(out / "gt.txt", bundle.gt, g.stride)
    formats.write_detections(out / "det.txt", out / "emb.bin", bundle.detections, g.stride, g.embed_dim)
    for i, fm in enumerate(bundle.feature_maps):
        formats.write_feature_map(out / "fmaps" / f"{i + 1:06d}.fmp", fm)
    manifest = dict(bundle.manifest)
    manifest.update({"geometry.height": g.height, "geometry.width": g.width,
                     "geometry.embed_dim": g.embed_dim, "geometry.stride": g.stride})
    formats.write_key_values(out / "manifest.txt", manifest)
    return out
