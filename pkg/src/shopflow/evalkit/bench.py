"""Throughput benchmark and miss-threshold sweep harnesses."""

from __future__ import annotations

import dataclasses
import statistics
from dataclasses import dataclass, field
from typing import Sequence

from ..detect import BBox, Detection, DropPlan, LatencyShim, ScriptedProvider
from ..imgproc import as_gray, downscale
from ..pipeline import PipelineConfig, Recorder, partition_batch, run_pipeline
from ..track import TrackerConfig
from .metrics import id_switches, pr_curve
from .scene import RenderedScene


def _table(header: Sequence[str], rows: Sequence[Sequence], block: str, keyed: Sequence[dict]) -> str:
    cells = [list(map(str, header))] + [[str(c) for c in r] for r in rows]
    widths = [max(len(r[i]) for r in cells) for i in range(len(header))]
    lines = ["  ".join(c.rjust(w) for c, w in zip(r, widths)) for r in cells]
    lines += ["", f"[{block}]"]
    for i, d in enumerate(keyed):
        lines += [f"{k}.{i}={v}" for k, v in d.items()]
    return "\n".join(lines) + "\n"


def tracker_predictions(frame_tracks) -> dict:
    """Tracked boxes as scored detections; the score is the last matched confidence."""
    return {f: [Detection(b, c) for _, b, c, *_ in rows] for f, rows in frame_tracks.items()}


def truth_boxes(truth) -> dict:
    return {f: [b for _, b, *_ in rows] for f, rows in truth.items()}


@dataclass
class RunResult:
    recorder: Recorder
    summary: object

    @property
    def ids(self) -> list[int]:
        return sorted({e.track_id for e in self.recorder.events})


def run_scene(scene: RenderedScene, plan: DropPlan | None = None, pcfg: PipelineConfig | None = None,
              tcfg: TrackerConfig | None = None, pipelined: bool = True, latency: float = 0.0,
              frames=None) -> RunResult:
    """Run a synthetic scene with a scripted provider and record every output."""
    n = scene.scene.frame_count
    provider = ScriptedProvider(scene.truth, n, plan)
    if latency > 0:
        provider = LatencyShim(provider, latency)
    rec = Recorder()
    source = frames if frames is not None else scene.frames()
    summary = run_pipeline(source, provider, pcfg, tcfg, [rec], pipelined=pipelined)
    return RunResult(rec, summary)


# -- miss-threshold sweep --------------------------------------------------------


@dataclass
class SweepRow:
    miss_threshold: int
    ap: float
    id_switches: int
    ids: int
    lost: int
    recovered: int


@dataclass
class SweepTable:
    rows: list = field(default_factory=list)
    detector_ap: float = 0.0

    def to_text(self) -> str:
        header = ("miss_threshold", "AP", "id_switches", "ids", "lost", "recovered")
        rows = [(r.miss_threshold, f"{r.ap:.6f}", r.id_switches, r.ids, r.lost, r.recovered) for r in self.rows]
        keyed = [dict(miss_threshold=r.miss_threshold, ap=f"{r.ap:.6f}", id_switches=r.id_switches, ids=r.ids)
                 for r in self.rows]
        text = _table(header, rows, "sweep", keyed)
        return text + f"detector_ap={self.detector_ap:.6f}\n"


def miss_threshold_sweep(scene: RenderedScene, plan: DropPlan | None = None, thresholds=(5, 10),
                         pcfg: PipelineConfig | None = None, tcfg: TrackerConfig | None = None,
                         iou_min: float = 0.5, id_min_iou: float = 0.3) -> SweepTable:
    """Run the same scene and provider once per miss threshold and tabulate AP and id switches.

    The detector-only reference scores the provider's output on every frame.
    """
    tcfg = tcfg or TrackerConfig()
    plan = plan or DropPlan()
    truth = truth_boxes(scene.truth)
    provider = ScriptedProvider(scene.truth, scene.scene.frame_count, plan)
    det_only = {f: provider.detections_for(f) for f in range(scene.scene.frame_count)}
    table = SweepTable(detector_ap=pr_curve(det_only, truth, iou_min).ap)
    frames = list(scene.frames())
    for m in thresholds:
        cfg = dataclasses.replace(tcfg, miss_threshold=int(m))
        res = run_scene(scene, plan, pcfg, cfg, pipelined=False, frames=frames)
        ft = res.recorder.frame_tracks()
        ap = pr_curve(tracker_predictions(ft), truth, iou_min).ap
        kinds = [e.kind for e in res.recorder.events]
        table.rows.append(SweepRow(int(m), ap, id_switches(ft, scene.truth, id_min_iou), len(res.ids),
                                   kinds.count("lost"), kinds.count("recover")))
    return table


# -- throughput ----------------------------------------------------------------------


@dataclass
class BenchRow:
    detections_per_batch: int
    detection_frames: int
    tracker_only_frames: int
    sequential_fps: float
    pipelined_fps: float
    sequential_runs: tuple = ()
    pipelined_runs: tuple = ()

    @property
    def ratio(self) -> float:
        return self.pipelined_fps / self.sequential_fps if self.sequential_fps > 0 else 0.0


@dataclass
class BenchTable:
    rows: list = field(default_factory=list)
    frames: int = 0
    reps: int = 0
    latency: float = 0.0
    tracker_delay: float = 0.0
    buffer_size: int = 0

    def to_text(self) -> str:
        header = ("det/batch", "det_frames", "trk_frames", "mode", "fps_median", "ratio")
        rows, keyed = [], []
        for r in self.rows:
            rows.append((r.detections_per_batch, r.detection_frames, r.tracker_only_frames, "sequential",
                         f"{r.sequential_fps:.3f}", "1.000"))
            rows.append((r.detections_per_batch, r.detection_frames, r.tracker_only_frames, "pipelined",
                         f"{r.pipelined_fps:.3f}", f"{r.ratio:.3f}"))
            keyed.append(dict(detections_per_batch=r.detections_per_batch, detection_frames=r.detection_frames,
                              tracker_only_frames=r.tracker_only_frames, sequential_fps=f"{r.sequential_fps:.3f}",
                              pipelined_fps=f"{r.pipelined_fps:.3f}", ratio=f"{r.ratio:.3f}"))
        text = _table(header, rows, "bench", keyed)
        return text + (f"frames={self.frames}\nreps={self.reps}\nbuffer_size={self.buffer_size}\n"
                       f"provider_latency_s={self.latency:g}\ntracker_delay_s={self.tracker_delay:g}\n")


def throughput_bench(scene: RenderedScene, plan: DropPlan | None = None, pcfg: PipelineConfig | None = None,
                     tcfg: TrackerConfig | None = None, latency: float = 0.1, tracker_delay: float = 0.0,
                     reps: int = 3, detections: Sequence[int] = (8,), frame_limit: int | None = None,
                     progress=None) -> BenchTable:
    """Median effective FPS of sequential and pipelined runs per ``detections_per_batch``.

    Frames are rendered and downsized before timing so ingest cost does not
    blur the detector/tracker overlap. ``tracker_delay`` is the minimum tracker
    time per batch.
    """
    if reps < 1:
        raise ValueError("reps must be >= 1")
    pcfg = pcfg or PipelineConfig()
    frames = []
    for i, img in scene.frames():
        if frame_limit is not None and i >= frame_limit:
            break
        frames.append((i, img))
    if frames and frames[0][1].shape != (pcfg.height, pcfg.width):
        frames = [(i, as_gray(downscale(img, pcfg.width, pcfg.height))) for i, img in frames]
    sx = pcfg.width / scene.scene.width
    sy = pcfg.height / scene.scene.height
    truth = scene.truth
    if (sx, sy) != (1.0, 1.0):
        truth = {f: [(a, BBox(b.x * sx, b.y * sy, b.w * sx, b.h * sy), v) for a, b, v in rows]
                 for f, rows in truth.items()}
    table = BenchTable(frames=len(frames), reps=reps, latency=latency, tracker_delay=tracker_delay,
                       buffer_size=pcfg.buffer_size)
    for d in detections:
        cfg = dataclasses.replace(pcfg, detections_per_batch=int(d), tracker_delay=tracker_delay)
        det, rest = partition_batch(list(range(cfg.buffer_size)), cfg.detections_per_batch)
        runs = {False: [], True: []}
        for rep in range(reps):
            for piped in (False, True):
                provider = LatencyShim(ScriptedProvider(truth, scene.scene.frame_count, plan), latency)
                s = run_pipeline(iter(frames), provider, cfg, tcfg, pipelined=piped)
                runs[piped].append(s.fps)
                if progress:
                    progress(f"bench det/batch={d} rep={rep} mode={s.mode} fps={s.fps:.3f}")
        table.rows.append(BenchRow(int(d), len(det), len(rest), statistics.median(runs[False]),
                                   statistics.median(runs[True]), tuple(runs[False]), tuple(runs[True])))
    return table
