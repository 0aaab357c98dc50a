"""Track identities: matching, flow propagation, miss counting and lost-track memory."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np

from . import flow, imgproc
from .detect import BBox, Detection, confidence_gate, iou


class TrackState(str, Enum):
    ACTIVE = "active"
    LOST = "lost"
    DEAD = "dead"


EVENT_KINDS = ("spawn", "match", "miss", "lost", "recover", "dead")


@dataclass
class TrackerConfig:
    """Tracker parameters.

    ``recovery_radius`` is expressed in the native camera raster and scaled
    by ``radius_scale`` (processing width / native width) before use.
    """

    miss_threshold: int = 5
    lost_memory: float = 5.0
    recovery_radius: float = 200.0
    radius_scale: float = 512.0 / 1280.0
    iou_match_threshold: float = 0.3
    confidence_threshold: float = 0.10
    fps: float = 25.0
    gradient_window: int = 5
    max_corners: int = imgproc.MAX_CORNERS
    corner_quality: float = imgproc.CORNER_QUALITY
    corner_min_distance: float = imgproc.CORNER_MIN_DISTANCE
    lk_window: int = flow.WINDOW
    lk_levels: int = flow.LEVELS
    lk_max_iters: int = flow.MAX_ITERS
    lk_eps: float = flow.EPS
    min_survivors: int = flow.MIN_SURVIVORS
    # fraction of the box trimmed from each side before seeding points, keeping
    # them off the person/background border where flow follows the background
    seed_margin: float = 0.1

    def __post_init__(self):
        if self.miss_threshold < 1:
            raise ValueError("miss_threshold must be >= 1")
        if self.lost_memory < 0:
            raise ValueError("lost_memory must be >= 0")
        if self.recovery_radius <= 0 or self.radius_scale <= 0 or self.fps <= 0:
            raise ValueError("recovery_radius, radius_scale and fps must be positive")
        for name in ("iou_match_threshold", "confidence_threshold"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if not 0.0 <= self.seed_margin < 0.5:
            raise ValueError(f"seed_margin must lie in [0, 0.5), got {self.seed_margin}")
        if self.gradient_window < 2:
            raise ValueError("gradient_window must be >= 2")

    @property
    def recovery_radius_px(self) -> float:
        return self.recovery_radius * self.radius_scale

    @property
    def lost_memory_frames(self) -> int:
        return math.ceil(self.lost_memory * self.fps - 1e-9)


@dataclass
class Track:
    id: int
    box: BBox
    state: TrackState = TrackState.ACTIVE
    points: np.ndarray = field(default_factory=lambda: np.zeros((0, 2)))
    history: list = field(default_factory=list)
    miss_count: int = 0
    lost_since: int | None = None
    confidence: float = 1.0
    needs_reseed: bool = False

    @property
    def center(self) -> tuple[float, float]:
        return self.box.center


@dataclass(frozen=True)
class Event:
    frame: int
    kind: str
    track_id: int
    box: BBox

    def line(self) -> str:
        b = self.box
        return f"{self.frame} {self.kind} {self.track_id} {b.x:.3f} {b.y:.3f} {b.w:.3f} {b.h:.3f}"


def parse_event_line(line: str) -> Event:
    tok = line.split()
    if len(tok) != 7 or tok[1] not in EVENT_KINDS:
        raise ValueError(f"malformed event line: {line!r}")
    return Event(int(tok[0]), tok[1], int(tok[2]), BBox(*(float(t) for t in tok[3:])))


@dataclass
class Assignment:
    pairs: list  # (track_id, detection_index)
    unmatched_tracks: list
    unmatched_detections: list


def greedy_assign(scores, track_ids: Sequence[int], threshold: float) -> Assignment:
    """One-to-one greedy matching on an IoU matrix (rows = tracks, cols = detections).

    Pairs are taken in descending score order; ties go to the lower track id,
    then the lower detection index. Scores below ``threshold`` never match.
    """
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2 or scores.shape[0] != len(track_ids):
        raise ValueError("score matrix must have one row per track id")
    n_dets = scores.shape[1]
    cand = [
        (-scores[r, c], track_ids[r], c, r)
        for r in range(len(track_ids))
        for c in range(n_dets)
        if scores[r, c] >= threshold
    ]
    cand.sort()
    used_t: set[int] = set()
    used_d: set[int] = set()
    pairs = []
    for _, tid, c, _r in cand:
        if tid in used_t or c in used_d:
            continue
        used_t.add(tid)
        used_d.add(c)
        pairs.append((tid, c))
    pairs.sort()
    return Assignment(
        pairs=pairs,
        unmatched_tracks=sorted(t for t in track_ids if t not in used_t),
        unmatched_detections=[c for c in range(n_dets) if c not in used_d],
    )


def match_detections(tracks: Sequence[Track], dets: Sequence[Detection], iou_threshold: float = 0.3) -> Assignment:
    scores = np.array([[iou(t.box, d.box) for d in dets] for t in tracks]).reshape(len(tracks), len(dets))
    return greedy_assign(scores, [t.id for t in tracks], iou_threshold)


def gradient_of(track: Track, k: int = 5):
    """Unit mean-velocity direction over the last ``k`` history centres.

    Returns ``None`` with fewer than two entries or when the net displacement
    over the window is under one pixel.
    """
    hist = track.history[-k:]
    if len(hist) < 2:
        return None
    (x0, y0), (x1, y1) = hist[0][1], hist[-1][1]
    dx, dy = x1 - x0, y1 - y0
    norm = math.hypot(dx, dy)
    if norm < 1.0:
        return None
    return (dx / norm, dy / norm)


def _sign_ok(g: float, d: float) -> bool:
    if g > 0:
        return d > 0
    if g < 0:
        return d < 0
    return True


def ray_distance(anchor, direction, point) -> float:
    """Distance from ``point`` to the ray leaving ``anchor`` along ``direction``."""
    dx, dy = point[0] - anchor[0], point[1] - anchor[1]
    t = dx * direction[0] + dy * direction[1]
    if t <= 0:
        return math.hypot(dx, dy)
    return abs(dx * direction[1] - dy * direction[0])


def recovery_score(lost: Track, det: Detection, cfg: TrackerConfig):
    """Preference distance for recovering ``lost`` with ``det``; ``None`` if ineligible."""
    anchor = lost.center
    cx, cy = det.box.center
    dist = math.hypot(cx - anchor[0], cy - anchor[1])
    grad = gradient_of(lost, cfg.gradient_window)
    in_radius = dist <= cfg.recovery_radius_px
    in_quadrant = grad is not None and _sign_ok(grad[0], cx - anchor[0]) and _sign_ok(grad[1], cy - anchor[1])
    if not (in_radius or in_quadrant):
        return None
    return dist if grad is None else ray_distance(anchor, grad, (cx, cy))


def best_recovery(lost: Sequence[Track], det: Detection, cfg: TrackerConfig):
    """Id of the lost track that ``det`` would recover, or ``None``."""
    best = None
    for t in lost:
        s = recovery_score(t, det, cfg)
        if s is not None and (best is None or (s, t.id) < best):
            best = (s, t.id)
    return None if best is None else best[1]


class Tracker:
    """Owns every track of a run and applies per-frame updates.

    Not thread-safe; one tracker thread drives it. :meth:`snapshot` returns
    immutable copies for other consumers.
    """

    def __init__(self, cfg: TrackerConfig | None = None):
        self.cfg = cfg or TrackerConfig()
        self.tracks: dict[int, Track] = {}
        self._next_id = 1

    # -- views -----------------------------------------------------------------

    def _in_state(self, state: TrackState) -> list[Track]:
        return [t for t in self.tracks.values() if t.state is state]

    @property
    def active(self) -> list[Track]:
        return self._in_state(TrackState.ACTIVE)

    @property
    def lost(self) -> list[Track]:
        return self._in_state(TrackState.LOST)

    def snapshot(self) -> tuple:
        return tuple((t.id, t.box, t.confidence) for t in self.active)

    # -- operations --------------------------------------------------------------

    def purge_expired(self, frame: int) -> list[Event]:
        limit = self.cfg.lost_memory_frames
        events = []
        for t in self.lost:
            if frame - t.lost_since > limit:
                t.state = TrackState.DEAD
                t.points = np.zeros((0, 2))
                events.append(Event(frame, "dead", t.id, t.box))
        return events

    def _seed(self, track: Track, image) -> None:
        cfg = self.cfg
        h, w = image.shape
        b, m = track.box, cfg.seed_margin
        roi = BBox(b.x + m * b.w, b.y + m * b.h, b.w * (1 - 2 * m), b.h * (1 - 2 * m))
        if imgproc.roi_pixel_span(roi, w, h) is None:
            pts = []
        else:
            pts = imgproc.shi_tomasi_corners(
                image, roi, cfg.max_corners, cfg.corner_quality, cfg.corner_min_distance
            )
        track.points = np.array(pts, dtype=np.float64).reshape(-1, 2)
        track.needs_reseed = False

    def propagate(self, frame: int, prev: imgproc.Pyramid, nxt: imgproc.Pyramid) -> list[Event]:
        """Advance active tracks from ``prev`` to ``nxt`` (a tracker-only step)."""
        events = self.purge_expired(frame)
        tracks = [t for t in self.active if len(t.points)]
        for t in self.active:
            if not len(t.points):
                t.needs_reseed = True
        if not tracks:
            return events
        cfg = self.cfg
        allpts = np.concatenate([t.points for t in tracks])
        res = flow.lk_track(prev, nxt, allpts, cfg.lk_window, cfg.lk_max_iters, cfg.lk_eps)
        start = 0
        for t in tracks:
            n = len(t.points)
            sub = flow.FlowResult(res.points_next[start:start + n], res.status[start:start + n],
                                  res.residual[start:start + n])
            shift = flow.median_displacement(t.points, sub, cfg.min_survivors)
            if shift is None:
                t.needs_reseed = True
            else:
                t.box = t.box.translated(*shift)
            t.points = sub.points_next[sub.status]
            start += n
        return events

    def on_detection_frame(self, frame: int, dets: Sequence[Detection], image=None) -> list[Event]:
        """Reconcile flow proposals with a detection frame.

        ``image`` is the gray frame used to re-seed feature points; without it
        tracks keep no points and boxes stay put on tracker-only frames.
        """
        cfg = self.cfg
        events = self.purge_expired(frame)
        dets = confidence_gate(dets, cfg.confidence_threshold)

        def seed(t: Track):
            if image is None:
                t.points = np.zeros((0, 2))
            else:
                self._seed(t, image)

        active = self.active
        assign = match_detections(active, dets, cfg.iou_match_threshold)
        by_id = {t.id: t for t in active}
        for tid, di in assign.pairs:
            t, d = by_id[tid], dets[di]
            t.box, t.confidence, t.miss_count = d.box, d.confidence, 0
            t.history.append((frame, t.center))
            seed(t)
            events.append(Event(frame, "match", tid, t.box))
        for tid in assign.unmatched_tracks:
            t = by_id[tid]
            t.miss_count += 1
            t.history.append((frame, t.center))
            events.append(Event(frame, "miss", tid, t.box))
            if t.miss_count >= cfg.miss_threshold:
                t.state = TrackState.LOST
                t.lost_since = frame
                t.points = np.zeros((0, 2))
                events.append(Event(frame, "lost", tid, t.box))
            elif t.needs_reseed:
                seed(t)

        # lost-track recovery: globally greedy over (distance, track id, detection index)
        lost = self.lost
        cand = []
        for di in assign.unmatched_detections:
            for t in lost:
                s = recovery_score(t, dets[di], cfg)
                if s is not None:
                    cand.append((s, t.id, di))
        cand.sort()
        taken_t: set[int] = set()
        recovered: dict[int, int] = {}
        for _, tid, di in cand:
            if tid in taken_t or di in recovered:
                continue
            taken_t.add(tid)
            recovered[di] = tid
        for di in assign.unmatched_detections:
            d = dets[di]
            if di in recovered:
                t = self.tracks[recovered[di]]
                self._resume(t, d, frame)
                seed(t)
                events.append(Event(frame, "recover", t.id, t.box))
            else:
                t = self._spawn(d, frame)
                seed(t)
                events.append(Event(frame, "spawn", t.id, t.box))
        return events

    def try_recover_lost(self, det: Detection, frame: int):
        """Recover the best-matching lost track with ``det``; return its id or ``None``."""
        tid = best_recovery(self.lost, det, self.cfg)
        if tid is not None:
            self._resume(self.tracks[tid], det, frame)
        return tid

    def _resume(self, t: Track, d: Detection, frame: int) -> None:
        t.state = TrackState.ACTIVE
        t.box, t.confidence = d.box, d.confidence
        t.miss_count = 0
        t.lost_since = None
        t.history = [(frame, t.center)]

    def _spawn(self, d: Detection, frame: int) -> Track:
        t = Track(self._next_id, d.box, confidence=d.confidence, history=[(frame, d.box.center)])
        self._next_id += 1
        self.tracks[t.id] = t
        return t
