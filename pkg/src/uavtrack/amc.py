"""Dense response maps and the appearance-motion consistency cost.

A track's embedding is correlated against the current feature map and the
peak gives where appearance says the track is now; a detection's embedding is
correlated against the previous map and the peak gives where appearance says
the detection was. Distances from those peaks to the observed centers, in both
directions, are folded through a Gaussian kernel into a cost in [0, 1).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .types import FeatureMap, GridGeometry


@dataclass(frozen=True, eq=False)
class ResponseMap:
    geometry: GridGeometry
    values: np.ndarray  # (H, W), in [-1, 1]


class UnitCells:
    """Feature map with every cell vector unit-normalized, flattened row-major.

    Zero-norm cells stay zero so their response is 0. Built once per frame and
    shared read-only by every response map computed against that frame.
    """

    def __init__(self, fm: FeatureMap):
        self.geometry = fm.geometry
        g = fm.geometry
        flat = np.asarray(fm.values, dtype=np.float64).reshape(g.height * g.width, g.embed_dim)
        norms = np.linalg.norm(flat, axis=1)
        nz = norms > 0
        out = np.zeros_like(flat)
        out[nz] = flat[nz] / norms[nz, None]
        self.flat = out

    def responses(self, embeddings: np.ndarray) -> np.ndarray:
        """Cosine responses of K unit embeddings, shape (K, H*W)."""
        e = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
        if e.shape[1] != self.geometry.embed_dim:
            raise ValueError(f"embedding dim {e.shape[1]} != feature dim {self.geometry.embed_dim}")
        r = e @ self.flat.T
        return np.clip(r, -1.0, 1.0, out=r)

    def peaks(self, embeddings: np.ndarray) -> np.ndarray:
        """Argmax cell (x, y) of each embedding's response map, shape (K, 2)."""
        e = np.atleast_2d(np.asarray(embeddings, dtype=np.float64))
        if e.shape[0] == 0:
            return np.zeros((0, 2))
        # np.argmax returns the first maximum, i.e. the smallest row-major index
        idx = np.argmax(self.responses(e), axis=1)
        w = self.geometry.width
        return np.stack([idx % w, idx // w], axis=1).astype(np.float64)


def _as_unit_cells(fm) -> UnitCells:
    return fm if isinstance(fm, UnitCells) else UnitCells(fm)


def response_map(fm: FeatureMap, e) -> ResponseMap:
    e = np.asarray(e, dtype=np.float64)
    if e.ndim != 1 or e.shape[0] != fm.geometry.embed_dim:
        raise ValueError(f"embedding shape {e.shape} does not match feature dim {fm.geometry.embed_dim}")
    cells = _as_unit_cells(fm)
    g = fm.geometry
    return ResponseMap(g, cells.responses(e)[0].reshape(g.height, g.width))


def argmax_center(r: ResponseMap) -> tuple[int, int]:
    """Peak cell of a response map as (x, y); ties go to the smallest row-major index."""
    y, x = np.unravel_index(int(np.argmax(r.values)), r.values.shape)
    return (int(x), int(y))


def _pairwise(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64).reshape(-1, 2)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 2)
    return np.hypot(a[:, None, 0] - b[None, :, 0], a[:, None, 1] - b[None, :, 1])


def bidirectional_distances(track_embeddings, track_centers, det_embeddings, det_centers,
                            fm_t, fm_prev) -> tuple[np.ndarray, np.ndarray]:
    """Forward and backward appearance-guided distances, both (M tracks, N detections).

    ``track_centers`` are the tracks' observed centers in the previous frame and
    ``det_centers`` the detections' observed centers in the current frame.
    ``fm_t``/``fm_prev`` may be :class:`FeatureMap` or precomputed :class:`UnitCells`.
    """
    cur, prev = _as_unit_cells(fm_t), _as_unit_cells(fm_prev)
    if cur.geometry != prev.geometry:
        raise ValueError(f"feature map geometry mismatch: {cur.geometry} vs {prev.geometry}")
    m, n = len(track_centers), len(det_centers)
    if m == 0 or n == 0:
        return np.zeros((m, n)), np.zeros((m, n))
    q_trk = cur.peaks(track_embeddings)
    q_det = prev.peaks(det_embeddings)
    d_f = _pairwise(q_trk, det_centers)
    d_b = _pairwise(track_centers, q_det)
    return d_f, d_b


def amc_matrix(d_f, d_b, sigma: float = 5.0) -> np.ndarray:
    d_f = np.asarray(d_f, dtype=np.float64)
    d_b = np.asarray(d_b, dtype=np.float64)
    if d_f.shape != d_b.shape:
        raise ValueError(f"distance shapes differ: {d_f.shape} vs {d_b.shape}")
    # distances (not squared) are summed inside a single exponent
    return -np.expm1(-(d_f + d_b) / (2.0 * sigma * sigma))
