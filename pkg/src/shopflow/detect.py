"""Detection data model, the detection text format and detection providers.

The person detector itself is not part of this package. Anything that maps a
batch of frames to per-frame detections satisfies :class:`DetectionProvider`;
two concrete providers ship here, one replaying a detection file and one
perturbing synthetic ground truth according to a drop/jitter plan.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Protocol, Sequence

import numpy as np

DEFAULT_CONFIDENCE_THRESHOLD = 0.10


class DetectionFormatError(ValueError):
    """A detection file line could not be parsed or violates box invariants."""

    def __init__(self, path, lineno: int, msg: str):
        super().__init__(f"{path}:{lineno}: {msg}")
        self.path = path
        self.lineno = lineno


@dataclass(frozen=True)
class BBox:
    """Axis-aligned box: left/top edge plus width and height, in pixels."""

    x: float
    y: float
    w: float
    h: float

    def __post_init__(self):
        # plain floats keep repr() and text output free of numpy scalar types
        for name in ("x", "y", "w", "h"):
            object.__setattr__(self, name, float(getattr(self, name)))
        vals = (self.x, self.y, self.w, self.h)
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"box coordinates must be finite: {vals}")
        if self.w <= 0 or self.h <= 0:
            raise ValueError(f"box width and height must be positive: w={self.w} h={self.h}")

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> "BBox":
        return cls(cx - w / 2.0, cy - h / 2.0, w, h)

    @property
    def center(self) -> tuple[float, float]:
        return (self.x + self.w / 2.0, self.y + self.h / 2.0)

    @property
    def area(self) -> float:
        return self.w * self.h

    def translated(self, dx: float, dy: float) -> "BBox":
        return BBox(self.x + dx, self.y + dy, self.w, self.h)


@dataclass(frozen=True)
class Detection:
    box: BBox
    confidence: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "confidence", float(self.confidence))
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence must lie in [0, 1], got {self.confidence}")


def iou(a: BBox, b: BBox) -> float:
    # (x + w) - x can round above w; an overlap never exceeds either side
    ix = min(min(a.x + a.w, b.x + b.w) - max(a.x, b.x), a.w, b.w)
    iy = min(min(a.y + a.h, b.y + b.h) - max(a.y, b.y), a.h, b.h)
    if ix <= 0 or iy <= 0:
        return 0.0
    inter = ix * iy
    return inter / (a.area + b.area - inter)


def confidence_gate(dets: Sequence[Detection], threshold: float) -> list[Detection]:
    """Keep detections scoring strictly higher than ``threshold``, in order."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    return [d for d in dets if d.confidence > threshold]


# -- detection files ---------------------------------------------------------
#
# One line per frame: ``frame_index n_boxes x y w h conf [x y w h conf ...]``.


def format_detection_line(frame: int, dets: Sequence[Detection]) -> str:
    parts = [str(frame), str(len(dets))]
    for d in dets:
        b = d.box
        parts += [repr(float(b.x)), repr(float(b.y)), repr(float(b.w)), repr(float(b.h)),
                  repr(float(d.confidence))]
    return " ".join(parts)


def write_detection_file(path, table: Mapping[int, Sequence[Detection]]) -> None:
    lines = [format_detection_line(f, table[f]) for f in sorted(table)]
    Path(path).write_text("".join(line + "\n" for line in lines), encoding="ascii", newline="\n")


def load_detection_file(path, frame_count: int) -> dict[int, list[Detection]]:
    """Parse a detection file into ``{frame_index: [Detection, ...]}``.

    Frames without a line are absent from the table and mean "no detections".
    Every problem is reported as :class:`DetectionFormatError` carrying the
    1-based line number.
    """
    table: dict[int, list[Detection]] = {}
    text = Path(path).read_text(encoding="ascii")
    for lineno, raw in enumerate(text.split("\n"), start=1):
        line = raw.strip()
        if not line:
            continue
        tok = line.split()
        try:
            frame, n = int(tok[0]), int(tok[1])
        except (ValueError, IndexError):
            raise DetectionFormatError(path, lineno, "expected 'frame_index n_boxes ...'") from None
        if not 0 <= frame < frame_count:
            raise DetectionFormatError(path, lineno, f"frame index {frame} outside [0, {frame_count})")
        if n < 0 or len(tok) != 2 + 5 * n:
            raise DetectionFormatError(path, lineno, f"expected {n} boxes of 5 values, got {len(tok) - 2} values")
        if frame in table:
            raise DetectionFormatError(path, lineno, f"duplicate frame index {frame}")
        dets = []
        for k in range(n):
            try:
                x, y, w, h, c = (float(v) for v in tok[2 + 5 * k: 7 + 5 * k])
                dets.append(Detection(BBox(x, y, w, h), c))
            except ValueError as exc:
                raise DetectionFormatError(path, lineno, f"box {k}: {exc}") from None
        table[frame] = dets
    return table


def scale_detections(dets: Sequence[Detection], from_res, to_res) -> list[Detection]:
    """Map boxes between rasters by the per-axis resolution ratio."""
    (fw, fh), (tw, th) = from_res, to_res
    if min(fw, fh, tw, th) <= 0:
        raise ValueError("resolutions must be positive")
    sx, sy = tw / fw, th / fh
    return [
        Detection(BBox(d.box.x * sx, d.box.y * sy, d.box.w * sx, d.box.h * sy), d.confidence)
        for d in dets
    ]


# -- providers ----------------------------------------------------------------


class DetectionProvider(Protocol):
    def detect(self, frames: Sequence, indices: Sequence[int]) -> dict[int, list[Detection]]:
        """Return detections for every requested frame index (possibly empty lists)."""
        ...


class FileProvider:
    """Replays a detection table loaded from a file."""

    def __init__(self, table: Mapping[int, Sequence[Detection]], source_res=None, target_res=None):
        self.table = table
        self.source_res = source_res
        self.target_res = target_res

    @classmethod
    def from_file(cls, path, frame_count: int, source_res=None, target_res=None) -> "FileProvider":
        return cls(load_detection_file(path, frame_count), source_res, target_res)

    def detect(self, frames, indices):
        out = {}
        for i in indices:
            dets = list(self.table.get(i, ()))
            if self.source_res and self.target_res and tuple(self.source_res) != tuple(self.target_res):
                dets = scale_detections(dets, self.source_res, self.target_res)
            out[i] = dets
        return out


@dataclass(frozen=True)
class DropRule:
    """Suppress ``agent_id`` on every frame in ``[start, end]`` (inclusive)."""

    agent_id: int
    start: int
    end: int

    def covers(self, agent_id: int, frame: int) -> bool:
        return agent_id == self.agent_id and self.start <= frame <= self.end


@dataclass
class DropPlan:
    """Per-frame perturbation of ground truth for :class:`ScriptedProvider`.

    ``confidence`` is ``"constant"`` (every box gets ``confidence_value``),
    ``"visibility"`` (the box's visible fraction) or ``"uniform"`` (seeded
    draw from ``[confidence_low, 1]``).
    """

    drops: list[DropRule] = field(default_factory=list)
    sigma: float = 0.0
    confidence: str = "constant"
    confidence_value: float = 1.0
    confidence_low: float = 0.5
    seed: int = 0

    def dropped(self, agent_id: int, frame: int) -> bool:
        return any(r.covers(agent_id, frame) for r in self.drops)


class ScriptedProvider:
    """Ground truth of a synthetic scene, perturbed by a :class:`DropPlan`.

    ``truth`` maps frame index to a list of ``(agent_id, BBox, visible_fraction)``.
    Randomness is keyed on ``(seed, frame)`` so results do not depend on how
    frames are grouped into batches.
    """

    def __init__(self, truth: Mapping[int, Sequence], frame_count: int, plan: DropPlan | None = None):
        self.truth = truth
        self.frame_count = frame_count
        self.plan = plan or DropPlan()

    def detections_for(self, frame: int) -> list[Detection]:
        if not 0 <= frame < self.frame_count:
            raise IndexError(f"frame {frame} outside scenario range [0, {self.frame_count})")
        plan = self.plan
        rng = np.random.default_rng([plan.seed, frame])
        out = []
        for agent_id, box, visible in self.truth.get(frame, ()):
            # draw before the drop test so dropping one agent leaves others unchanged
            jit = rng.normal(0.0, plan.sigma, 4) if plan.sigma > 0 else np.zeros(4)
            u = rng.uniform(plan.confidence_low, 1.0)
            if plan.dropped(agent_id, frame):
                continue
            w = max(1.0, box.w + jit[2])
            h = max(1.0, box.h + jit[3])
            cx, cy = box.center
            jb = BBox.from_center(cx + jit[0], cy + jit[1], w, h)
            if plan.confidence == "visibility":
                conf = float(visible)
            elif plan.confidence == "uniform":
                conf = float(u)
            else:
                conf = plan.confidence_value
            out.append(Detection(jb, conf))
        return out

    def detect(self, frames, indices):
        return {i: self.detections_for(i) for i in indices}


class LatencyShim:
    """Wraps a provider and sleeps ``seconds`` per batch to mimic a slow detector."""

    def __init__(self, inner: DetectionProvider, seconds: float):
        self.inner = inner
        self.seconds = seconds

    def detect(self, frames, indices):
        t0 = time.perf_counter()
        out = self.inner.detect(frames, indices)
        rest = self.seconds - (time.perf_counter() - t0)
        if rest > 0:
            time.sleep(rest)
        return out
