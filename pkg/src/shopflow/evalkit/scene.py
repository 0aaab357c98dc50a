"""Seeded synthetic store scenes with exact ground truth.

Agents are textured rectangles whose texture moves rigidly with them, so
sub-pixel motion is exact by construction. Static occluders (counters) are
drawn over agents and reduce their visible fraction.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Sequence

import numpy as np

from ..detect import BBox


@dataclass(frozen=True)
class Texture:
    """Sum of seeded plane waves, a smooth pattern with gradients in every direction."""

    seed: int
    mean: float = 128.0
    amplitude: float = 60.0
    waves: int = 10
    min_period: float = 8.0
    max_period: float = 28.0

    @cached_property
    def _params(self):
        rng = np.random.default_rng(self.seed)
        k = 2 * np.pi / rng.uniform(self.min_period, self.max_period, self.waves)
        ang = rng.uniform(0.0, np.pi, self.waves)
        phase = rng.uniform(0.0, 2 * np.pi, self.waves)
        return k * np.cos(ang), k * np.sin(ang), phase

    def __call__(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        kx, ky, ph = self._params
        v = np.zeros(np.broadcast(x, y).shape)
        for i in range(self.waves):
            v += np.cos(kx[i] * x + ky[i] * y + ph[i])
        # unit-variance normalisation of a sum of independent cosines
        return self.mean + self.amplitude * v / np.sqrt(self.waves / 2.0) / 2.0


def quantize(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


@dataclass(frozen=True)
class Agent:
    """A person: piecewise-linear centre path ``((frame, cx, cy), ...)`` and a box size.

    The agent exists from its first to its last waypoint frame.
    """

    id: int
    path: tuple
    w: float
    h: float
    texture_seed: int = 0

    def __post_init__(self):
        if not self.path:
            raise ValueError(f"agent {self.id} has an empty path")
        frames = [p[0] for p in self.path]
        if any(b <= a for a, b in zip(frames, frames[1:])):
            raise ValueError(f"agent {self.id} path frames must be strictly increasing")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"agent {self.id} box size must be positive")

    @property
    def span(self) -> tuple[int, int]:
        return int(self.path[0][0]), int(self.path[-1][0])

    def center(self, frame: int):
        f0, f1 = self.span
        if frame < f0 or frame > f1:
            return None
        fs = [p[0] for p in self.path]
        return (float(np.interp(frame, fs, [p[1] for p in self.path])),
                float(np.interp(frame, fs, [p[2] for p in self.path])))

    def box(self, frame: int):
        c = self.center(frame)
        return None if c is None else BBox.from_center(c[0], c[1], self.w, self.h)


@dataclass(frozen=True)
class SyntheticScene:
    width: int = 512
    height: int = 288
    fps: float = 25.0
    frame_count: int = 240
    agents: tuple = ()
    background_seed: int = 0
    occluders: tuple = ()  # BBox rectangles drawn over agents

    def validate(self) -> None:
        if self.width < 8 or self.height < 8 or self.frame_count < 0 or self.fps <= 0:
            raise ValueError("scene needs width/height >= 8, frame_count >= 0 and fps > 0")
        ids = [a.id for a in self.agents]
        if len(set(ids)) != len(ids):
            raise ValueError(f"duplicate agent ids in {ids}")
        for a in self.agents:
            f0, f1 = a.span
            if f0 < 0 or f1 >= self.frame_count:
                raise ValueError(f"agent {a.id} path spans frames [{f0}, {f1}] outside [0, {self.frame_count})")
            # the path is piecewise linear, so checking the waypoints bounds every frame
            for f, cx, cy in a.path:
                b = BBox.from_center(cx, cy, a.w, a.h)
                if b.x < 0 or b.y < 0 or b.x + b.w > self.width or b.y + b.h > self.height:
                    raise ValueError(f"agent {a.id} leaves the {self.width}x{self.height} frame at frame {f}")


def _union_area(rects: Sequence[tuple]) -> float:
    """Exact area of a union of ``(x0, y0, x1, y1)`` rectangles by coordinate compression."""
    rects = [r for r in rects if r[2] > r[0] and r[3] > r[1]]
    if not rects:
        return 0.0
    xs = sorted({v for r in rects for v in (r[0], r[2])})
    ys = sorted({v for r in rects for v in (r[1], r[3])})
    area = 0.0
    for i in range(len(xs) - 1):
        for j in range(len(ys) - 1):
            mx, my = 0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])
            if any(r[0] <= mx < r[2] and r[1] <= my < r[3] for r in rects):
                area += (xs[i + 1] - xs[i]) * (ys[j + 1] - ys[j])
    return area


def visible_fraction(box: BBox, occluders: Sequence[BBox]) -> float:
    clipped = [
        (max(box.x, o.x), max(box.y, o.y), min(box.x + box.w, o.x + o.w), min(box.y + box.h, o.y + o.h))
        for o in occluders
    ]
    return 1.0 - _union_area(clipped) / box.area


def _pixel_range(lo: float, hi: float, n: int) -> tuple[int, int]:
    # pixel centres c with lo <= c < hi, clipped to [0, n)
    a = int(np.ceil(lo))
    b = int(np.ceil(hi))
    return max(a, 0), min(b, n)


class RenderedScene:
    """Lazy renderer plus ground truth for a :class:`SyntheticScene`.

    ``truth[frame]`` lists ``(agent_id, BBox, visible_fraction)`` for every
    agent present in that frame.
    """

    def __init__(self, scene: SyntheticScene):
        scene.validate()
        self.scene = scene
        self._bg_tex = Texture(scene.background_seed, mean=100.0, amplitude=45.0)
        self._agent_tex = {a.id: Texture(a.texture_seed, mean=150.0, amplitude=60.0, min_period=6.0,
                                         max_period=20.0) for a in scene.agents}
        self._occ_tex = Texture(scene.background_seed + 7919, mean=200.0, amplitude=20.0)

    @cached_property
    def background(self) -> np.ndarray:
        s = self.scene
        yy, xx = np.mgrid[0:s.height, 0:s.width].astype(np.float64)
        return self._bg_tex(xx, yy)

    @cached_property
    def truth(self) -> dict:
        s = self.scene
        out = {}
        for f in range(s.frame_count):
            rows = []
            for a in s.agents:
                b = a.box(f)
                if b is not None:
                    rows.append((a.id, b, visible_fraction(b, s.occluders)))
            out[f] = rows
        return out

    def truth_boxes(self) -> dict:
        return {f: [b for _, b, _ in rows] for f, rows in self.truth.items()}

    def frame(self, index: int) -> np.ndarray:
        s = self.scene
        if not 0 <= index < s.frame_count:
            raise IndexError(f"frame {index} outside [0, {s.frame_count})")
        img = self.background.copy()
        for a in s.agents:
            c = a.center(index)
            if c is None:
                continue
            b = BBox.from_center(c[0], c[1], a.w, a.h)
            x0, x1 = _pixel_range(b.x, b.x + b.w, s.width)
            y0, y1 = _pixel_range(b.y, b.y + b.h, s.height)
            if x0 >= x1 or y0 >= y1:
                continue
            yy, xx = np.mgrid[y0:y1, x0:x1].astype(np.float64)
            img[y0:y1, x0:x1] = self._agent_tex[a.id](xx - c[0], yy - c[1])
        for o in s.occluders:
            x0, x1 = _pixel_range(o.x, o.x + o.w, s.width)
            y0, y1 = _pixel_range(o.y, o.y + o.h, s.height)
            if x0 < x1 and y0 < y1:
                yy, xx = np.mgrid[y0:y1, x0:x1].astype(np.float64)
                img[y0:y1, x0:x1] = self._occ_tex(xx, yy)
        return quantize(img)

    def frames(self):
        for i in range(self.scene.frame_count):
            yield i, self.frame(i)


def generate_scene(scene: SyntheticScene) -> RenderedScene:
    return RenderedScene(scene)


def scene_source(rendered: RenderedScene):
    """Frame source for :func:`shopflow.pipeline.run_pipeline`."""
    return rendered.frames()


def shifted_texture_pair(seed: int, shift, width: int = 512, height: int = 288):
    """Two frames of one texture, the second translated by ``shift`` = (dx, dy)."""
    tex = Texture(seed, mean=128.0, amplitude=55.0, min_period=8.0, max_period=30.0)
    yy, xx = np.mgrid[0:height, 0:width].astype(np.float64)
    return quantize(tex(xx, yy)), quantize(tex(xx - shift[0], yy - shift[1]))


def demo_scene(frame_count: int = 240) -> SyntheticScene:
    """Three agents: two walkers and one loiterer that dominates the heat map."""
    n = frame_count - 1
    walker = Agent(1, ((0, 60.0, 150.0), (n, 300.0, 150.0)), 36.0, 80.0, texture_seed=11)
    diagonal = Agent(2, ((0, 420.0, 60.0), (n, 330.0, 220.0)), 32.0, 72.0, texture_seed=22)
    loiter = Agent(3, ((0, 120.0, 230.0), (n // 3, 135.0, 226.0), (2 * n // 3, 122.0, 234.0),
                       (n, 130.0, 228.0)), 36.0, 60.0, texture_seed=33)
    return SyntheticScene(512, 288, 25.0, frame_count, (walker, diagonal, loiter), background_seed=5,
                          occluders=(BBox(440.0, 230.0, 60.0, 50.0),))
