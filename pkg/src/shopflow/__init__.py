"""Tracking-by-detection person-flow pipeline with heat-map analytics."""

from .detect import BBox, Detection, iou
from .pipeline import PipelineConfig, run_pipeline
from .track import Tracker, TrackerConfig

__all__ = ["BBox", "Detection", "iou", "PipelineConfig", "run_pipeline", "Tracker", "TrackerConfig"]
__version__ = "0.1.0"
