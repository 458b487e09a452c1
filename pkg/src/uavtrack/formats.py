"""On-disk formats: MOTChallenge text, embedding sidecar, feature-map frames, manifests.

Text files carry image pixels with a top-left box origin and 1-based frames;
everything in memory is grid cells with 0-based frames.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .types import BBox, Detection, FeatureMap, GridGeometry

EMB_MAGIC = b"AMOTEMB1"
FMP_MAGIC = b"AMOTFMP1"


class FormatError(ValueError):
    pass


def fmt_num(x: float) -> str:
    s = f"{x:.4f}"
    return "0.0000" if s == "-0.0000" else s


@dataclass(frozen=True)
class MotRow:
    frame: int  # 1-based, as in the file
    id: int
    x: float
    y: float
    w: float
    h: float
    conf: float
    class_id: int
    extra: tuple[float, ...] = ()

    def bbox(self) -> BBox:
        return BBox.from_tlwh(self.x, self.y, self.w, self.h)


def read_mot(path: str | Path, min_fields: int = 8) -> list[MotRow]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) < min_fields:
                raise FormatError(f"{path}:{lineno}: expected at least {min_fields} fields, got {len(parts)}")
            try:
                frame, oid = int(float(parts[0])), int(float(parts[1]))
                x, y, w, h, conf = (float(p) for p in parts[2:7])
                cls = int(float(parts[7]))
                extra = tuple(float(p) for p in parts[8:])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: {exc}") from None
            if frame < 1:
                raise FormatError(f"{path}:{lineno}: frame numbers are 1-based, got {frame}")
            if not (w > 0 and h > 0):
                raise FormatError(f"{path}:{lineno}: non-positive box size")
            rows.append(MotRow(frame, oid, x, y, w, h, conf, cls, extra))
    return rows


def rows_to_frames(rows: Iterable[MotRow]) -> dict[int, list[tuple[int, BBox]]]:
    """Group rows into ``{0-based frame: [(id, BBox)]}`` for the metrics module."""
    out: dict[int, list[tuple[int, BBox]]] = {}
    for r in rows:
        out.setdefault(r.frame - 1, []).append((r.id, r.bbox()))
    return out


def mot_line(frame: int, oid: int, box_px: BBox, conf: float, cls: int, tail: Sequence[str]) -> str:
    x, y, w, h = box_px.tlwh()
    cells = [str(frame + 1), str(oid), fmt_num(x), fmt_num(y), fmt_num(w), fmt_num(h),
             fmt_num(conf), str(cls), *tail]
    return ",".join(cells)


def write_results(path: str | Path, results) -> None:
    """Tracker output, one ``frame,id,x,y,w,h,conf,class,-1,-1`` line per emitted box."""
    lines = [
        mot_line(fr.frame, o.track_id, o.bbox, o.confidence, o.class_id, ("-1", "-1"))
        for fr in results for o in fr.outputs
    ]
    Path(path).write_text("".join(l + "\n" for l in lines), encoding="utf-8")


def write_gt(path: str | Path, gt_tracks, stride: int) -> None:
    """GT as ``frame,id,x,y,w,h,conf,class,visibility`` sorted by frame then id."""
    rows = []
    for t in gt_tracks:
        for f, box in t.boxes.items():
            rows.append((f, t.gt_id, mot_line(f, t.gt_id, box.scaled(stride), 1.0, t.class_id, ("1",))))
    rows.sort(key=lambda r: (r[0], r[1]))
    Path(path).write_text("".join(r[2] + "\n" for r in rows), encoding="utf-8")


def write_detections(det_path: str | Path, emb_path: str | Path,
                     frames: Sequence[Sequence[Detection]], stride: int, embed_dim: int) -> None:
    lines, embs = [], []
    for f, dets in enumerate(frames):
        for d in dets:
            lines.append(mot_line(f, -1, d.bbox.scaled(stride), d.confidence, d.class_id, ("-1", "-1")))
            embs.append(d.embedding)
    Path(det_path).write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    arr = np.asarray(embs, dtype="<f4").reshape(len(embs), embed_dim)
    write_embeddings(emb_path, arr)


def write_embeddings(path: str | Path, arr: np.ndarray) -> None:
    arr = np.ascontiguousarray(arr, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(EMB_MAGIC)
        fh.write(struct.pack("<II", arr.shape[0], arr.shape[1]))
        fh.write(arr.tobytes())


def read_embeddings(path: str | Path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:8] != EMB_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:8]!r}")
    count, dim = struct.unpack_from("<II", data, 8)
    body = data[16:]
    if len(body) != count * dim * 4:
        raise FormatError(f"{path}: expected {count}x{dim} floats, found {len(body)} bytes")
    return np.frombuffer(body, dtype="<f4").reshape(count, dim).astype(np.float64)


def read_detections(det_path: str | Path, emb_path: str | Path, stride: int,
                    num_frames: int | None = None) -> list[list[Detection]]:
    """Detections per 0-based frame, in grid cells, embeddings unit-normalized."""
    rows = read_mot(det_path)
    embs = read_embeddings(emb_path) if Path(emb_path).exists() else np.zeros((0, 0))
    if len(embs) != len(rows):
        # name the first frame whose rows run past the sidecar
        bad = rows[min(len(embs), len(rows) - 1)].frame if rows else 1
        raise FormatError(
            f"frame {bad}: detection file has {len(rows)} rows but embedding file has {len(embs)}")
    n = max([r.frame for r in rows], default=0)
    n = max(n, num_frames or 0)
    frames: list[list[Detection]] = [[] for _ in range(n)]
    for r, e in zip(rows, embs):
        try:
            frames[r.frame - 1].append(Detection.create(r.bbox().scaled(1.0 / stride), r.conf, r.class_id, e))
        except ValueError as exc:
            raise FormatError(f"frame {r.frame}: {exc}") from None
    return frames


def write_feature_map(path: str | Path, fm: FeatureMap) -> None:
    g = fm.geometry
    with open(path, "wb") as fh:
        fh.write(FMP_MAGIC)
        fh.write(struct.pack("<III", g.height, g.width, g.embed_dim))
        fh.write(np.ascontiguousarray(fm.values, dtype="<f4").tobytes())


def read_feature_map(path: str | Path, stride: int = 4) -> FeatureMap:
    data = Path(path).read_bytes()
    if data[:8] != FMP_MAGIC:
        raise FormatError(f"{path}: bad magic {data[:8]!r}")
    h, w, d = struct.unpack_from("<III", data, 8)
    body = data[20:]
    if len(body) != h * w * d * 4:
        raise FormatError(f"{path}: expected {h}x{w}x{d} floats, found {len(body)} bytes")
    values = np.frombuffer(body, dtype="<f4").reshape(h, w, d)
    return FeatureMap(GridGeometry(h, w, d, stride), values)


def write_key_values(path: str | Path, items: dict) -> None:
    Path(path).write_text("".join(f"{k}={v}\n" for k, v in items.items()), encoding="utf-8")


class StoredScenario:
    """A scenario directory written by ``simulate``: detections, feature maps, GT, manifest.

    Feature maps are read from disk one frame at a time.
    """

    def __init__(self, root: str | Path, frame_ids: Sequence[int] | None = None,
                 detections: list[list[Detection]] | None = None):
        self.root = Path(root)
        self.manifest = read_manifest(self.root / "manifest.txt") if (self.root / "manifest.txt").exists() else {}
        self.stride = int(self.manifest.get("geometry.stride", 4))
        self.fmap_paths = sorted((self.root / "fmaps").glob("*.fmp")) if (self.root / "fmaps").is_dir() else []
        if detections is None:
            det_path = self.root / "det.txt"
            if det_path.exists():
                detections = read_detections(det_path, self.root / "emb.bin", self.stride,
                                             num_frames=len(self.fmap_paths))
            else:
                detections = [[] for _ in self.fmap_paths]
        if len(detections) > len(self.fmap_paths):
            raise FormatError(f"frame {len(self.fmap_paths) + 1}: detections present but no feature map file")
        self.all_detections = detections
        self.frame_ids = list(range(len(self.fmap_paths))) if frame_ids is None else list(frame_ids)

    @property
    def num_frames(self) -> int:
        return len(self.frame_ids)

    def frames(self):
        for f in self.frame_ids:
            dets = self.all_detections[f] if f < len(self.all_detections) else []
            yield dets, read_feature_map(self.fmap_paths[f], self.stride)

    def subsample(self, k: int) -> "StoredScenario":
        if k < 1 or k > self.num_frames:
            raise ValueError(f"interval {k} must be in [1, {self.num_frames}]")
        return StoredScenario(self.root, self.frame_ids[::k], self.all_detections)

    def gt_frames(self) -> dict[int, list[tuple[int, BBox]]]:
        frames = rows_to_frames(read_mot(self.root / "gt.txt"))
        remap = {old: new for new, old in enumerate(self.frame_ids)}
        return {remap[f]: v for f, v in frames.items() if f in remap}


def read_manifest(path: str | Path) -> dict[str, str]:
    from .types import read_key_values

    return read_key_values(path)
