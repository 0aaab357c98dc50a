"""Batch pipeline: image buffer, batch partition, overlapped detector and tracker units.

Three roles run in pipelined mode, each in its own thread:

* ingest   reads the frame source, downsizes to the processing raster and
           cuts the stream into batches;
* detector runs the detection provider on each batch's detection frames;
* tracker  replays the batch frame by frame through :class:`~shopflow.track.Tracker`.

The caller's thread drains tracker output in frame order and feeds the sinks.
All hand-offs go through bounded blocking queues, so the detector works on
batch N while the tracker is still on batch N-1.
"""

from __future__ import annotations

import logging
import queue
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from . import imgproc
from .detect import BBox, DetectionProvider
from .track import Event, Tracker, TrackerConfig

log = logging.getLogger(__name__)


class PipelineError(RuntimeError):
    pass


@dataclass
class PipelineConfig:
    buffer_size: int = 24
    detections_per_batch: int = 8
    width: int = 512
    height: int = 288
    queue_capacity: int = 1
    # minimum tracker time per batch (real work is padded with a sleep); lets
    # the throughput harness set a tracker load comparable to the detector's
    tracker_delay: float = 0.0

    def __post_init__(self):
        for name in ("buffer_size", "detections_per_batch", "width", "height", "queue_capacity"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.buffer_size % self.detections_per_batch:
            raise ValueError(
                f"buffer_size ({self.buffer_size}) must be divisible by "
                f"detections_per_batch ({self.detections_per_batch})"
            )
        if self.tracker_delay < 0:
            raise ValueError("tracker_delay must be >= 0")

    @property
    def stride(self) -> int:
        return self.buffer_size // self.detections_per_batch


@dataclass(frozen=True)
class FrameBatch:
    frames: tuple  # ((frame_index, gray, color_or_None), ...)
    detection_indices: tuple

    @property
    def indices(self) -> tuple:
        return tuple(f[0] for f in self.frames)

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class FrameOutput:
    frame: int
    tracks: tuple  # ((track_id, BBox, confidence), ...)
    events: tuple


class Recorder:
    """Sink that keeps every output; renders the event log and per-frame track table."""

    def __init__(self):
        self.outputs: list[FrameOutput] = []

    def __call__(self, out: FrameOutput) -> None:
        self.outputs.append(out)

    @property
    def events(self) -> list[Event]:
        return [e for o in self.outputs for e in o.events]

    def frame_tracks(self) -> dict:
        return {o.frame: o.tracks for o in self.outputs}

    def event_log(self) -> str:
        return "".join(e.line() + "\n" for e in self.events)

    def tracks_text(self) -> str:
        """One line per tracked box: ``frame id x y w h confidence``.

        Floats are written at full precision so a heat map rebuilt from the
        file matches the live one exactly.
        """
        lines = []
        for o in self.outputs:
            for tid, b, conf in o.tracks:
                lines.append(f"{o.frame} {tid} {b.x!r} {b.y!r} {b.w!r} {b.h!r} {float(conf)!r}\n")
        return "".join(lines)


def parse_tracks_text(lines) -> dict:
    """Inverse of :meth:`Recorder.tracks_text`: ``{frame: [(id, BBox, conf), ...]}``."""
    out: dict = {}
    for lineno, line in enumerate(lines, start=1):
        parts = line.split()
        if not parts:
            continue
        try:
            if len(parts) != 7:
                raise ValueError(f"expected 7 fields, got {len(parts)}")
            f, tid = int(parts[0]), int(parts[1])
            x, y, w, h, conf = (float(v) for v in parts[2:])
            out.setdefault(f, []).append((tid, BBox(x, y, w, h), conf))
        except ValueError as exc:
            raise ValueError(f"tracks line {lineno}: {exc}") from None
    return out


def partition_batch(frame_indices: Sequence[int], detections_per_batch: int):
    """Split a buffer into evenly strided detection frames and tracker-only frames."""
    n = len(frame_indices)
    if detections_per_batch < 1 or n % detections_per_batch:
        raise ValueError(f"{n} frames cannot be split into {detections_per_batch} detection frames")
    stride = n // detections_per_batch
    det = [frame_indices[i] for i in range(0, n, stride)]
    rest = [frame_indices[i] for i in range(n) if i % stride]
    return det, rest


def partition_partial(frame_indices: Sequence[int], stride: int):
    """Partition a short final batch.

    The largest prefix divisible by ``stride`` keeps the regular pattern; every
    frame of the remainder becomes a detection frame.
    """
    n = len(frame_indices)
    cut = n - n % stride
    det, rest = partition_batch(frame_indices[:cut], cut // stride) if cut else ([], [])
    return det + list(frame_indices[cut:]), rest


def make_batch(frames: Sequence, cfg: PipelineConfig) -> FrameBatch:
    idx = [f[0] for f in frames]
    if len(frames) == cfg.buffer_size:
        det, _ = partition_batch(idx, cfg.detections_per_batch)
    else:
        det, _ = partition_partial(idx, cfg.stride)
    return FrameBatch(tuple(frames), tuple(det))


class TrackerUnit:
    """Tracker side of the pipeline: pyramids, flow steps and detection updates."""

    def __init__(self, tcfg: TrackerConfig, delay: float = 0.0):
        self.tracker = Tracker(tcfg)
        self.delay = delay
        self._prev = None

    def process(self, batch: FrameBatch, dets: dict) -> list[FrameOutput]:
        t0 = time.perf_counter()
        cfg = self.tracker.cfg
        det_frames = set(batch.detection_indices)
        out = []
        for idx, gray, _color in batch.frames:
            pyr = imgproc.build_pyramid(gray, min(cfg.lk_levels, _max_levels(gray)))
            events: list[Event] = []
            if self._prev is not None:
                events += self.tracker.propagate(idx, self._prev, pyr)
            if idx in det_frames:
                events += self.tracker.on_detection_frame(idx, dets.get(idx, ()), gray)
            self._prev = pyr
            out.append(FrameOutput(idx, self.tracker.snapshot(), tuple(events)))
        rest = self.delay - (time.perf_counter() - t0)
        if rest > 0:
            time.sleep(rest)
        return out


def _max_levels(gray) -> int:
    m = min(gray.shape)
    k = 1
    while 2 ** k <= m and k < 16:
        k += 1
    return k


def _prepare(item, cfg: PipelineConfig):
    idx, img = item[0], item[1]
    color = item[2] if len(item) > 2 else None
    arr = np.asarray(img)
    if arr.ndim == 3:
        color = arr if color is None else color
        arr = imgproc.to_luminance(arr)
    if arr.shape != (cfg.height, cfg.width):
        arr = imgproc.downscale(arr, cfg.width, cfg.height)
    return (int(idx), imgproc.as_gray(arr), color)


@dataclass
class RunSummary:
    frames: int = 0
    batches: int = 0
    wall_time: float = 0.0
    detector_busy: float = 0.0
    tracker_busy: float = 0.0
    max_buffered: int = 0
    mean_latency: float = 0.0
    mode: str = "pipelined"
    extra: dict = field(default_factory=dict)

    @property
    def fps(self) -> float:
        return self.frames / self.wall_time if self.wall_time > 0 else 0.0

    def as_dict(self) -> dict:
        d = {
            "mode": self.mode,
            "frames": self.frames,
            "batches": self.batches,
            "wall_time_s": f"{self.wall_time:.4f}",
            "effective_fps": f"{self.fps:.3f}",
            "mean_latency_s": f"{self.mean_latency:.4f}",
            "detector_busy_s": f"{self.detector_busy:.4f}",
            "tracker_busy_s": f"{self.tracker_busy:.4f}",
            "max_buffered_frames": self.max_buffered,
        }
        d.update(self.extra)
        return d

    def to_text(self) -> str:
        d = self.as_dict()
        width = max(len(k) for k in d)
        lines = ["run summary"] + [f"  {k.ljust(width)}  {v}" for k, v in d.items()]
        lines += ["", "[summary]"] + [f"{k}={v}" for k, v in d.items()]
        return "\n".join(lines) + "\n"


_DONE = object()


class _Failure:
    def __init__(self, exc: BaseException):
        self.exc = exc


def _check_cover(dets: dict, batch: FrameBatch) -> dict:
    missing = [i for i in batch.detection_indices if i not in dets]
    if missing:
        raise PipelineError(f"provider result misses detection frames {missing}")
    return dets


def _detect(provider: DetectionProvider, batch: FrameBatch) -> dict:
    grays = [f[1] for f in batch.frames if f[0] in set(batch.detection_indices)]
    try:
        dets = provider.detect(grays, list(batch.detection_indices))
    except Exception as exc:
        raise PipelineError(f"provider failed on batch starting at frame {batch.indices[0]}: {exc}") from exc
    return _check_cover(dets, batch)


def _batches(source: Iterable, cfg: PipelineConfig, on_frame: Callable[[], None] | None = None):
    buf = []
    for item in source:
        buf.append(_prepare(item, cfg))
        if on_frame:
            on_frame()
        if len(buf) == cfg.buffer_size:
            yield make_batch(buf, cfg)
            buf = []
    if buf:
        yield make_batch(buf, cfg)


def run_pipeline(
    source: Iterable,
    provider: DetectionProvider,
    pcfg: PipelineConfig | None = None,
    tcfg: TrackerConfig | None = None,
    sinks: Sequence[Callable[[FrameOutput], None]] = (),
    pipelined: bool = True,
) -> RunSummary:
    """Run the detector-tracker pipeline over ``source`` and feed ``sinks``.

    ``source`` yields ``(frame_index, image)`` or ``(frame_index, image, color)``
    in frame order. With ``pipelined=False`` everything runs in the calling
    thread, batch after batch; the emitted outputs are identical either way.
    """
    pcfg = pcfg or PipelineConfig()
    tcfg = tcfg or TrackerConfig()
    if pipelined:
        return _run_threaded(source, provider, pcfg, tcfg, sinks)
    return _run_sequential(source, provider, pcfg, tcfg, sinks)


def _emit(outputs, sinks, last_frame):
    for o in outputs:
        if o.frame <= last_frame:
            raise PipelineError(f"output frame {o.frame} emitted after frame {last_frame}")
        last_frame = o.frame
        for s in sinks:
            s(o)
    return last_frame


def _run_sequential(source, provider, pcfg, tcfg, sinks) -> RunSummary:
    summary = RunSummary(mode="sequential")
    unit = TrackerUnit(tcfg, pcfg.tracker_delay)
    t0 = time.perf_counter()
    last = -1
    latency = 0.0
    for batch in _batches(source, pcfg):
        t_in = time.perf_counter()
        summary.max_buffered = max(summary.max_buffered, len(batch))
        dets = _detect(provider, batch)
        t1 = time.perf_counter()
        outputs = unit.process(batch, dets)
        t2 = time.perf_counter()
        summary.detector_busy += t1 - t_in
        summary.tracker_busy += t2 - t1
        last = _emit(outputs, sinks, last)
        latency += (time.perf_counter() - t_in) * len(batch)
        summary.frames += len(batch)
        summary.batches += 1
        log.info("batch %d frames=%d detect=%.3fs track=%.3fs", summary.batches, len(batch), t1 - t_in, t2 - t1)
    summary.wall_time = time.perf_counter() - t0
    summary.mean_latency = latency / summary.frames if summary.frames else 0.0
    return summary


def _run_threaded(source, provider, pcfg, tcfg, sinks) -> RunSummary:
    cap = pcfg.queue_capacity
    q_det: queue.Queue = queue.Queue(maxsize=cap)
    q_trk: queue.Queue = queue.Queue(maxsize=cap)
    q_out: queue.Queue = queue.Queue(maxsize=cap)
    stop = threading.Event()
    summary = RunSummary(mode="pipelined")
    lock = threading.Lock()
    buffered = [0]

    def put(q, item):
        while not stop.is_set():
            try:
                q.put(item, timeout=0.05)
                return True
            except queue.Full:
                continue
        return False

    def get(q):
        while True:
            try:
                return q.get(timeout=0.05)
            except queue.Empty:
                if stop.is_set():
                    return _DONE

    def on_frame():
        with lock:
            buffered[0] += 1
            summary.max_buffered = max(summary.max_buffered, buffered[0])

    def ingest():
        try:
            for batch in _batches(source, pcfg, on_frame):
                if not put(q_det, (time.perf_counter(), batch)):
                    return
            put(q_det, _DONE)
        except BaseException as exc:  # noqa: BLE001 - forwarded to the caller
            put(q_det, _Failure(exc))

    def detector():
        while True:
            item = get(q_det)
            if item is _DONE or isinstance(item, _Failure):
                put(q_trk, item)
                return
            t_in, batch = item
            with lock:
                buffered[0] -= len(batch)
            t0 = time.perf_counter()
            try:
                dets = _detect(provider, batch)
            except BaseException as exc:  # noqa: BLE001
                put(q_trk, _Failure(exc))
                return
            summary.detector_busy += time.perf_counter() - t0
            log.info("detector batch@%d frames=%d %.3fs", batch.indices[0], len(batch), time.perf_counter() - t0)
            if not put(q_trk, (t_in, batch, dets)):
                return

    def tracker():
        unit = TrackerUnit(tcfg, pcfg.tracker_delay)
        while True:
            item = get(q_trk)
            if item is _DONE or isinstance(item, _Failure):
                put(q_out, item)
                return
            t_in, batch, dets = item
            t0 = time.perf_counter()
            try:
                outputs = unit.process(batch, dets)
            except BaseException as exc:  # noqa: BLE001
                put(q_out, _Failure(exc))
                return
            summary.tracker_busy += time.perf_counter() - t0
            log.info("tracker batch@%d frames=%d %.3fs", batch.indices[0], len(batch), time.perf_counter() - t0)
            if not put(q_out, (t_in, outputs)):
                return

    threads = [threading.Thread(target=f, name=f"shopflow-{f.__name__}", daemon=True)
               for f in (ingest, detector, tracker)]
    t0 = time.perf_counter()
    for t in threads:
        t.start()
    last = -1
    latency = 0.0
    try:
        while True:
            item = get(q_out)
            if item is _DONE:
                break
            if isinstance(item, _Failure):
                exc = item.exc
                if isinstance(exc, PipelineError):
                    raise exc
                raise PipelineError(str(exc)) from exc
            t_in, outputs = item
            last = _emit(outputs, sinks, last)
            latency += (time.perf_counter() - t_in) * len(outputs)
            summary.frames += len(outputs)
            summary.batches += 1
    finally:
        stop.set()
        for t in threads:
            t.join(timeout=5.0)
    summary.wall_time = time.perf_counter() - t0
    summary.mean_latency = latency / summary.frames if summary.frames else 0.0
    return summary
