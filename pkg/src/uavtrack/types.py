"""Shared domain types, grid coordinate conventions and tracker configuration.

All association math runs in feature-grid cells. A point ``(x, y)`` lives in
``[0, W) x [0, H)``; feature maps are indexed ``values[y, x, d]``. Image pixels
only appear at serialization time via :func:`grid_to_image`.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .kalman import KalmanState

UNIT_NORM_TOL = 1e-6


@dataclass(frozen=True)
class GridGeometry:
    height: int = 152
    width: int = 272
    embed_dim: int = 128
    stride: int = 4

    def __post_init__(self):
        for name in ("height", "width", "embed_dim", "stride"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"GridGeometry.{name} must be >= 1, got {getattr(self, name)}")

    def contains(self, x: float, y: float) -> bool:
        return 0.0 <= x < self.width and 0.0 <= y < self.height


def grid_to_image(p, geom: GridGeometry) -> tuple[float, float]:
    return (float(p[0]) * geom.stride, float(p[1]) * geom.stride)


def image_to_grid(p, geom: GridGeometry) -> tuple[float, float]:
    return (float(p[0]) / geom.stride, float(p[1]) / geom.stride)


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box given by its center and size, in grid cells."""

    cx: float
    cy: float
    w: float
    h: float

    def __post_init__(self):
        if not (np.isfinite(self.cx) and np.isfinite(self.cy)):
            raise ValueError(f"non-finite box center ({self.cx}, {self.cy})")
        if not (self.w > 0 and self.h > 0):
            raise ValueError(f"box size must be positive, got w={self.w} h={self.h}")

    @classmethod
    def from_tlwh(cls, x: float, y: float, w: float, h: float) -> "BBox":
        return cls(x + w / 2.0, y + h / 2.0, w, h)

    @property
    def center(self) -> tuple[float, float]:
        return (self.cx, self.cy)

    def tlwh(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2.0, self.cy - self.h / 2.0, self.w, self.h)

    def tlbr(self) -> tuple[float, float, float, float]:
        return (self.cx - self.w / 2.0, self.cy - self.h / 2.0,
                self.cx + self.w / 2.0, self.cy + self.h / 2.0)

    def scaled(self, s: float) -> "BBox":
        return BBox(self.cx * s, self.cy * s, self.w * s, self.h * s)


def unit(v) -> np.ndarray:
    """Return ``v`` as a float64 unit vector; raises on zero or non-finite input."""
    v = np.asarray(v, dtype=np.float64).ravel()
    n = float(np.linalg.norm(v))
    if not np.isfinite(n) or n == 0.0:
        raise ValueError("cannot normalize a zero or non-finite embedding")
    return v / n


def _check_unit(v: np.ndarray, what: str) -> None:
    n = float(np.linalg.norm(v))
    if abs(n - 1.0) > UNIT_NORM_TOL:
        raise ValueError(f"{what} embedding must be unit-norm, got norm {n:.9f}")


@dataclass(frozen=True, eq=False)
class Detection:
    bbox: BBox
    confidence: float
    class_id: int
    embedding: np.ndarray

    def __post_init__(self):
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must be in [0, 1], got {self.confidence}")
        if self.class_id < 0:
            raise ValueError(f"class_id must be >= 0, got {self.class_id}")
        emb = np.asarray(self.embedding, dtype=np.float64)
        _check_unit(emb, "detection")
        emb.setflags(write=False)
        object.__setattr__(self, "embedding", emb)

    @classmethod
    def create(cls, bbox: BBox, confidence: float, class_id: int, embedding) -> "Detection":
        """Build a detection, unit-normalizing the raw embedding on ingestion."""
        return cls(bbox, float(confidence), int(class_id), unit(embedding))


class TrackStatus(enum.Enum):
    TENTATIVE = "tentative"
    ACTIVE = "active"
    LOST = "lost"
    REMOVED = "removed"


@dataclass(frozen=True, eq=False)
class Snapshot:
    frame: int
    bbox: BBox
    embedding: np.ndarray


@dataclass(eq=False)
class Track:
    """A persistent identity. Mutated in place by the tracker, one frame at a time."""

    id: int
    class_id: int
    kf_state: "KalmanState"
    embedding: np.ndarray
    status: TrackStatus = TrackStatus.ACTIVE
    buffer: deque = field(default_factory=lambda: deque(maxlen=20))
    frames_since_update: int = 0
    consecutive_reactivations: int = 0
    confidence: float = 1.0

    def __post_init__(self):
        if self.id < 1:
            raise ValueError(f"track id must be positive, got {self.id}")
        self.embedding = np.asarray(self.embedding, dtype=np.float64)
        _check_unit(self.embedding, "track")

    def push_snapshot(self, frame: int, bbox: BBox) -> None:
        if self.buffer and self.buffer[-1].frame >= frame:
            raise ValueError(f"buffer frames must increase: {self.buffer[-1].frame} then {frame}")
        self.buffer.append(Snapshot(frame, bbox, self.embedding.copy()))

    @property
    def bbox(self) -> BBox:
        return self.kf_state.bbox()


@dataclass(frozen=True, eq=False)
class FeatureMap:
    geometry: GridGeometry
    values: np.ndarray  # (H, W, D)

    def __post_init__(self):
        g = self.geometry
        shape = (g.height, g.width, g.embed_dim)
        if self.values.shape != shape:
            raise ValueError(f"feature map shape {self.values.shape} != geometry {shape}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature map contains non-finite values")

    @classmethod
    def from_array(cls, values: np.ndarray, stride: int = 4) -> "FeatureMap":
        h, w, d = values.shape
        return cls(GridGeometry(h, w, d, stride), values)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrackerConfig:
    tau_det: float = 0.4
    conf_high: float = 0.5
    conf_low: float = 0.1
    sigma: float = 5.0
    lambda_mtc: float = 3.0
    gate_stage1: float = 0.8
    gate_stage2: float = 0.5
    max_lost_frames: int = 30
    buffer_len: int = 20
    mtc_min_consecutive: int = 3
    mtc_overlap_gate: float = 0.5
    reactivation_cap: int = 5
    embed_momentum: float = 0.9
    # cue switches for ablations; the default is the full tracker
    use_amc: bool = True
    use_iou: bool = True
    use_app: bool = True
    use_mtc: bool = True

    def __post_init__(self):
        if not 0.0 <= self.conf_low < self.conf_high <= 1.0:
            raise ConfigError(f"need 0 <= conf_low < conf_high <= 1, got {self.conf_low}, {self.conf_high}")
        if not 0.0 <= self.tau_det <= 1.0:
            raise ConfigError(f"tau_det must be in [0, 1], got {self.tau_det}")
        if self.sigma <= 0:
            raise ConfigError(f"sigma must be > 0, got {self.sigma}")
        if self.lambda_mtc <= 0:
            raise ConfigError(f"lambda_mtc must be > 0, got {self.lambda_mtc}")
        for name in ("gate_stage1", "gate_stage2", "mtc_overlap_gate", "embed_momentum"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"{name} must be in [0, 1], got {getattr(self, name)}")
        for name in ("max_lost_frames", "buffer_len", "mtc_min_consecutive", "reactivation_cap"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.buffer_len < 1:
            raise ConfigError("buffer_len must be >= 1")

    @classmethod
    def from_mapping(cls, items: dict[str, str]) -> "TrackerConfig":
        return cls(**_coerce_fields(cls, items))

    @classmethod
    def load(cls, path: str | Path) -> "TrackerConfig":
        return cls.from_mapping(read_key_values(path))

    def to_text(self) -> str:
        return "".join(f"{f.name}={_fmt_value(getattr(self, f.name))}\n" for f in fields(self))


def _fmt_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _coerce_fields(cls, items: dict[str, str]) -> dict:
    known = {f.name: f for f in fields(cls)}
    out = {}
    for key, raw in items.items():
        if key not in known:
            raise ConfigError(f"unknown config key {key!r}")
        default = known[key].default
        try:
            out[key] = parse_scalar(raw, type(default))
        except ValueError as exc:
            raise ConfigError(f"bad value for {key!r}: {raw!r} ({exc})") from None
    return out


def parse_scalar(raw: str, kind: type):
    raw = raw.strip()
    if kind is bool:
        low = raw.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ValueError("expected a boolean")
    if kind is int:
        return int(raw)
    if kind is float:
        return float(raw)
    return raw


def read_key_values(path: str | Path) -> dict[str, str]:
    """Parse a flat ``key=value`` file. Blank lines and ``#`` comments are skipped."""
    out: dict[str, str] = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        key = key.strip()
        if key in out:
            raise ConfigError(f"{path}:{lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out
