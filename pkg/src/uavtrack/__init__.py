"""Training-free multi-object tracking with appearance-motion consistency costs.

Core entry points: :class:`~uavtrack.tracker.Tracker`, :func:`~uavtrack.tracker.run_sequence`,
:func:`~uavtrack.metrics.evaluate` and :func:`~uavtrack.simgen.generate`.
"""

from .metrics import MetricsReport, evaluate
from .tracker import FrameResult, Tracker, run_sequence
from .types import BBox, Detection, FeatureMap, GridGeometry, Track, TrackerConfig

__all__ = [
    "BBox", "Detection", "FeatureMap", "FrameResult", "GridGeometry", "MetricsReport",
    "Track", "Tracker", "TrackerConfig", "evaluate", "run_sequence",
]
__version__ = "0.1.0"
