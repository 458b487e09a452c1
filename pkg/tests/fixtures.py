"""Hand-scripted scenarios shared by the tracker and acceptance tests."""

from uavtrack.simgen import scripted_bundle
from uavtrack.types import BBox, GridGeometry

SMALL = GridGeometry(height=40, width=64, embed_dim=16, stride=4)


def crossing_bundle(seed: int = 7):
    """Two 6x6 objects cross head-on around frame 3, turn back at frame 6 and cross again.

    The boxes overlap heavily for several frames, so IoU alone cannot tell
    which detection continues which track.
    """
    n, turn = 12, 6
    xa = [20 + 1.5 * min(t, 2 * turn - t) for t in range(n)]
    xb = [31 - 1.5 * min(t, 2 * turn - t) for t in range(n)]
    boxes = {1: [BBox(x, 20, 6, 6) for x in xa], 2: [BBox(x, 20, 6, 6) for x in xb]}
    return scripted_bundle(boxes, SMALL, seed)


DROPPED_FRAME = 6


def dropped_frame_bundle(seed: int = 3, n: int = 12):
    """One object moving 1 cell/frame; its detection is missing at one frame but it stays in the map."""
    boxes = {1: [BBox(10 + t, 15 + 0.5 * t, 5, 5) for t in range(n)]}
    return scripted_bundle(boxes, SMALL, seed, dropped={(1, DROPPED_FRAME)})
