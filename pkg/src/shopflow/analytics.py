"""Heat maps of visited spots and per-visitor statistics."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .detect import BBox
from .imgproc import resize_bilinear, round_half_away
from .track import Event, parse_event_line

OVERLAY_ALPHA = 0.6
# blue -> cyan -> green -> yellow -> red at v = 0, .25, .5, .75, 1
COLOR_STOPS = np.array(
    [[0, 0, 255], [0, 255, 255], [0, 255, 0], [255, 255, 0], [255, 0, 0]], dtype=np.float64
)


@dataclass
class HeatMap:
    width: int
    height: int
    acc: np.ndarray = None
    frame_span: tuple | None = None
    kernel: str = "tent"

    def __post_init__(self):
        if self.acc is None:
            self.acc = np.zeros((self.height, self.width), dtype=np.float64)
        if self.acc.shape != (self.height, self.width):
            raise ValueError("accumulator shape does not match map size")
        if self.kernel not in ("tent", "gaussian", "uniform"):
            raise ValueError(f"unknown heat-map kernel {self.kernel!r}")

    def note_frame(self, frame: int) -> None:
        if self.frame_span is None:
            self.frame_span = (frame, frame)
        else:
            self.frame_span = (min(self.frame_span[0], frame), max(self.frame_span[1], frame))

    def to_text(self) -> str:
        """Accumulator as a plain-text matrix, one row per line."""
        return "".join(" ".join(f"{v:.6g}" for v in row) + "\n" for row in self.acc)


def _axis_weights(lo: float, size: float, n: int, kernel: str):
    start = max(int(math.ceil(lo)), 0)
    stop = min(int(math.floor(lo + size)), n - 1)
    if stop < start:
        return start, np.zeros(0)
    px = np.arange(start, stop + 1, dtype=np.float64)
    c = lo + size / 2.0
    if kernel == "tent":
        w = np.maximum(1.0 - np.abs(2.0 * (px - c) / size), 0.0)
    elif kernel == "gaussian":
        # sigma = size / 6 puts the box border at 3 sigma
        w = np.exp(-0.5 * ((px - c) / (size / 6.0)) ** 2)
    else:
        w = np.ones_like(px)
    return start, w


def box_weights(box: BBox, width: int, height: int, kernel: str = "tent"):
    """Return ``(x0, y0, weights)`` for the pixels of ``box`` inside the map."""
    x0, wx = _axis_weights(box.x, box.w, width, kernel)
    y0, wy = _axis_weights(box.y, box.h, height, kernel)
    return x0, y0, np.outer(wy, wx)


def accumulate(hm: HeatMap, box: BBox, frame: int | None = None) -> HeatMap:
    """Add the box's weight kernel (1 at the centre, 0 at the border) in place."""
    x0, y0, w = box_weights(box, hm.width, hm.height, hm.kernel)
    if w.size:
        hm.acc[y0:y0 + w.shape[0], x0:x0 + w.shape[1]] += w
    if frame is not None:
        hm.note_frame(frame)
    return hm


def normalize(hm: HeatMap) -> np.ndarray:
    peak = float(hm.acc.max()) if hm.acc.size else 0.0
    if peak <= 0.0:
        return np.zeros_like(hm.acc)
    return hm.acc / peak


def colormap(v: np.ndarray) -> np.ndarray:
    """Five-stop piecewise-linear colormap of values in [0, 1] to float RGB."""
    v = np.clip(np.asarray(v, dtype=np.float64), 0.0, 1.0)
    pos = v * (len(COLOR_STOPS) - 1)
    i0 = np.minimum(np.floor(pos).astype(np.intp), len(COLOR_STOPS) - 2)
    t = (pos - i0)[..., None]
    return COLOR_STOPS[i0] * (1 - t) + COLOR_STOPS[i0 + 1] * t


def render_overlay(norm: np.ndarray, background: np.ndarray, alpha: float = OVERLAY_ALPHA) -> np.ndarray:
    """Blend the colormapped heat map over ``background``.

    ``background`` (gray or RGB) is resampled to the map raster when its size
    differs. Output is uint8 RGB; rounding is half away from zero.
    """
    norm = np.asarray(norm, dtype=np.float64)
    bg = np.asarray(background)
    if bg.ndim == 2:
        bg = np.repeat(bg[..., None], 3, axis=2)
    if bg.ndim != 3 or bg.shape[2] != 3:
        raise ValueError(f"background must be gray or RGB, got shape {bg.shape}")
    h, w = norm.shape
    if bg.shape[:2] != (h, w):
        bh, bw = bg.shape[:2]
        if bh * w != bw * h:
            raise ValueError(f"background {bw}x{bh} does not match heat map {w}x{h} aspect")
        bg = resize_bilinear(bg, w, h)
    a = (alpha * norm)[..., None]
    out = (1.0 - a) * bg.astype(np.float64) + a * colormap(norm)
    return np.clip(round_half_away(out), 0, 255).astype(np.uint8)


def heatmap_from_tracks(frame_tracks, width: int, height: int, frames=None, kernel: str = "tent") -> HeatMap:
    """Accumulate every tracked box of the selected frames (all frames by default)."""
    hm = HeatMap(width, height, kernel=kernel)
    for f in sorted(frame_tracks):
        if frames is not None and f not in frames:
            continue
        hm.note_frame(f)
        for row in frame_tracks[f]:
            accumulate(hm, row[1])
    return hm


# -- visit statistics ----------------------------------------------------------

_SEEN = ("spawn", "match", "miss", "recover")


@dataclass(frozen=True)
class TrackVisit:
    id: int
    first_seen: int
    last_seen: int
    dwell: float
    path_length: float


@dataclass
class VisitStats:
    visits: list = field(default_factory=list)
    fps: float = 25.0

    @property
    def visitors(self) -> int:
        return len(self.visits)

    @property
    def mean_dwell(self) -> float:
        return sum(v.dwell for v in self.visits) / len(self.visits) if self.visits else 0.0

    def as_dict(self) -> dict:
        return {"visitors": self.visitors, "mean_dwell_s": f"{self.mean_dwell:.3f}", "fps": f"{self.fps:g}"}

    def to_text(self) -> str:
        lines = [f"{'id':>5} {'first':>7} {'last':>7} {'dwell_s':>9} {'path_px':>10}"]
        for v in self.visits:
            lines.append(f"{v.id:>5} {v.first_seen:>7} {v.last_seen:>7} {v.dwell:>9.3f} {v.path_length:>10.2f}")
        lines += ["", "[stats]"] + [f"{k}={val}" for k, val in self.as_dict().items()]
        return "\n".join(lines) + "\n"


def read_event_log(lines: Iterable[str]) -> list[Event]:
    events = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            events.append(parse_event_line(line))
        except ValueError as exc:
            raise ValueError(f"event log line {lineno}: {exc}") from None
    return events


def collect_stats(event_log, fps: float) -> VisitStats:
    """Per-id visit records from an event log (lines or :class:`Event` objects).

    Seen frames are those of spawn/match/miss/recover events; path length sums
    the distances between consecutive seen box centres.
    """
    items = list(event_log)
    events = items if all(isinstance(e, Event) for e in items) else read_event_log(items)
    seen: dict[int, list] = {}
    for e in events:
        if e.kind in _SEEN:
            seen.setdefault(e.track_id, []).append((e.frame, e.box.center))
        else:
            seen.setdefault(e.track_id, [])
    visits = []
    for tid in sorted(seen):
        obs = sorted(seen[tid], key=lambda o: o[0])
        if not obs:
            continue
        length = sum(math.dist(a[1], b[1]) for a, b in zip(obs, obs[1:]))
        first, last = obs[0][0], obs[-1][0]
        visits.append(TrackVisit(tid, first, last, (last - first) / fps, length))
    return VisitStats(visits, fps)


def argmax_pixel(acc: np.ndarray) -> tuple[int, int]:
    """``(x, y)`` of the first maximum in row-major order."""
    y, x = np.unravel_index(int(np.argmax(acc)), acc.shape)
    return int(x), int(y)
