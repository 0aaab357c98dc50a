"""Desk-scale evaluation: synthetic scenes, PR/AP scoring, id switches, benchmarks."""

from .bench import miss_threshold_sweep, throughput_bench
from .metrics import PRCurve, id_switches, pr_curve
from .scene import Agent, RenderedScene, SyntheticScene, Texture, generate_scene, scene_source

__all__ = [
    "Agent",
    "PRCurve",
    "RenderedScene",
    "SyntheticScene",
    "Texture",
    "generate_scene",
    "id_switches",
    "miss_threshold_sweep",
    "pr_curve",
    "scene_source",
    "throughput_bench",
]
