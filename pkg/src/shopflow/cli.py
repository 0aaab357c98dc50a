"""Command-line front end: ``shopflow run|heatmap|eval|bench``.

Exit status is 0 on success, 1 for configuration errors and 2 for runtime
failures; every failure prints one line starting with ``shopflow: error:``.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from . import analytics, plotting
from .config import ConfigError, RunConfig, load_config
from .detect import BBox, DetectionFormatError, FileProvider, LatencyShim, ScriptedProvider, load_detection_file
from .evalkit.bench import miss_threshold_sweep, throughput_bench, tracker_predictions, truth_boxes
from .evalkit.metrics import id_switches, pr_curve
from .evalkit.scene import RenderedScene, generate_scene
from .imgproc import as_gray, downscale, to_luminance
from .netpbm import NetpbmError, directory_source, list_frames, read_netpbm, write_netpbm
from .pipeline import PipelineError, Recorder, parse_tracks_text, run_pipeline

log = logging.getLogger("shopflow")


# -- run context -------------------------------------------------------------------


@dataclass
class Context:
    cfg: RunConfig
    out: Path
    rendered: RenderedScene | None = None

    @property
    def raster(self) -> tuple[int, int]:
        return self.cfg.pipeline.width, self.cfg.pipeline.height

    @property
    def frame_count(self) -> int:
        if self.rendered is not None:
            n = self.rendered.scene.frame_count
        else:
            n = len(list_frames(self.cfg.input.frames_dir))
        lim = self.cfg.input.frame_limit
        return min(n, lim) if lim else n

    def source(self):
        n = self.frame_count
        if self.rendered is not None:
            return ((i, self.rendered.frame(i)) for i in range(n))
        return directory_source(self.cfg.input.frames_dir, n)

    def truth(self):
        """Ground truth ``{frame: [(agent_id, BBox, vis), ...]}`` in the processing raster, or None."""
        if self.rendered is None:
            return None
        s = self.rendered.scene
        w, h = self.raster
        sx, sy = w / s.width, h / s.height
        t = self.rendered.truth
        if (sx, sy) == (1.0, 1.0):
            return {f: rows for f, rows in t.items() if f < self.frame_count}
        return {f: [(a, BBox(b.x * sx, b.y * sy, b.w * sx, b.h * sy), v) for a, b, v in rows]
                for f, rows in t.items() if f < self.frame_count}

    def provider(self, with_latency: bool = True):
        p = self.cfg.provider
        if p.kind == "file":
            src = (p.source_width, p.source_height) if p.source_width else None
            prov = FileProvider.from_file(p.path, self.frame_count, src, self.raster if src else None)
        else:
            prov = ScriptedProvider(self.truth(), self.frame_count, self.cfg.drop_plan())
        if with_latency and p.latency > 0:
            prov = LatencyShim(prov, p.latency)
        return prov

    def background(self, frame: int) -> np.ndarray:
        """Gray frame ``frame`` (clamped to the run) at the processing raster."""
        w, h = self.raster
        n = self.frame_count
        if n == 0:
            return np.zeros((h, w), dtype=np.uint8)
        i = min(max(frame, 0), n - 1)
        if self.rendered is not None:
            img = self.rendered.frame(i)
        else:
            img = read_netpbm(list_frames(self.cfg.input.frames_dir)[i][1])
        if img.ndim == 3:
            img = to_luminance(img)
        if img.shape != (h, w):
            img = as_gray(downscale(img, w, h))
        return img


def _context(args) -> Context:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_seed(args.seed)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError("--out", f"cannot create output directory {out}: {exc.strerror}") from None
    rendered = generate_scene(cfg.scene) if cfg.input.source == "scene" else None
    return Context(cfg, out, rendered)


def _write(path: Path, text: str) -> Path:
    path.write_text(text)
    log.info("wrote %s", path)
    return path


def _run(ctx: Context) -> tuple[Recorder, object]:
    rec = Recorder()
    summary = run_pipeline(ctx.source(), ctx.provider(), ctx.cfg.pipeline, ctx.cfg.tracker, [rec],
                           pipelined=ctx.cfg.mode == "pipelined")
    return rec, summary


def _write_run(ctx: Context, rec: Recorder, summary) -> None:
    _write(ctx.out / "events.log", rec.event_log())
    _write(ctx.out / "tracks.txt", rec.tracks_text())
    summary.extra["tracks"] = len({e.track_id for e in rec.events})
    summary.extra["seed"] = ctx.cfg.seed
    _write(ctx.out / "summary.txt", summary.to_text())


# -- commands ----------------------------------------------------------------------


def cmd_run(args) -> int:
    ctx = _context(args)
    rec, summary = _run(ctx)
    _write_run(ctx, rec, summary)
    print(f"{summary.frames} frames, {summary.extra['tracks']} tracks, {summary.fps:.2f} fps -> {ctx.out}")
    return 0


def cmd_heatmap(args) -> int:
    ctx = _context(args)
    if args.tracks:
        try:
            frame_tracks = parse_tracks_text(Path(args.tracks).read_text().splitlines())
        except OSError as exc:
            raise ConfigError("--tracks", f"cannot read {args.tracks}: {exc.strerror}") from None
        events_path = Path(args.events) if args.events else Path(args.tracks).with_name("events.log")
        try:
            events = analytics.read_event_log(events_path.read_text().splitlines())
        except OSError as exc:
            raise ConfigError("--events", f"cannot read {events_path}: {exc.strerror}") from None
    else:
        rec, summary = _run(ctx)
        _write_run(ctx, rec, summary)
        frame_tracks, events = rec.frame_tracks(), rec.events
    w, h = ctx.raster
    an = ctx.cfg.analytics
    slots = an.slots or ((0, max(ctx.frame_count - 1, 0)),)
    for k, (f0, f1) in enumerate(slots, start=1):
        hm = analytics.heatmap_from_tracks(frame_tracks, w, h, range(f0, f1 + 1), an.kernel)
        norm = analytics.normalize(hm)
        bg = ctx.background(f0)
        tag = f"slot{k}"
        write_netpbm(ctx.out / f"heatmap_{tag}.ppm", analytics.render_overlay(norm, bg, an.alpha))
        _write(ctx.out / f"heatmap_{tag}.txt", hm.to_text())
        plotting.plot_heatmap(norm, ctx.out / f"heatmap_{tag}.png", bg, f"frames {f0}-{f1}")
        x, y = analytics.argmax_pixel(hm.acc)
        print(f"{tag}: frames {f0}-{f1}, peak at ({x}, {y})" if hm.acc.max() > 0 else f"{tag}: frames {f0}-{f1}, empty")
    stats = analytics.collect_stats(events, ctx.cfg.input.fps)
    _write(ctx.out / "stats.txt", stats.to_text())
    print(f"{stats.visitors} visitors, mean dwell {stats.mean_dwell:.2f} s -> {ctx.out}")
    return 0


def cmd_eval(args) -> int:
    ctx = _context(args)
    cfg = ctx.cfg
    truth = ctx.truth()
    if truth is not None:
        gt = truth_boxes(truth)
    elif cfg.eval.truth:
        gt = {f: [d.box for d in dets] for f, dets in load_detection_file(cfg.eval.truth, ctx.frame_count).items()}
        for f in range(ctx.frame_count):
            gt.setdefault(f, [])
    else:
        raise ConfigError("eval.truth", "evaluation of a frame directory needs a ground-truth file")
    rec, summary = _run(ctx)
    _write_run(ctx, rec, summary)
    prov = ctx.provider(with_latency=False)
    det_only = prov.detect(None, list(range(ctx.frame_count)))
    pr_det = pr_curve(det_only, gt, cfg.eval.iou_min)
    pr_trk = pr_curve(tracker_predictions(rec.frame_tracks()), gt, cfg.eval.iou_min)
    _write(ctx.out / "pr_detector.txt", pr_det.to_text())
    _write(ctx.out / "pr_tracker.txt", pr_trk.to_text())
    plotting.plot_pr_curves({"detector only": pr_det, "detector + tracker": pr_trk}, ctx.out / "pr.png")
    switches = id_switches(rec.frame_tracks(), truth, cfg.eval.id_min_iou) if truth is not None else None
    report = {
        "frames": ctx.frame_count,
        "iou_min": f"{cfg.eval.iou_min:g}",
        "ap_detector": f"{pr_det.ap:.6f}",
        "ap_tracker": f"{pr_trk.ap:.6f}",
        "truth_boxes": pr_det.n_truth,
        "tracks": len({e.track_id for e in rec.events}),
        "id_switches": "n/a" if switches is None else switches,
    }
    width = max(len(k) for k in report)
    lines = ["evaluation"] + [f"  {k.ljust(width)}  {v}" for k, v in report.items()]
    lines += ["", "[eval]"] + [f"{k}={v}" for k, v in report.items()]
    text = "\n".join(lines) + "\n"
    if ctx.rendered is not None and cfg.provider.kind == "scripted":
        # the sweep reruns the same scene with the tracker's miss threshold varied
        sweep = miss_threshold_sweep(_ScaledScene(ctx), cfg.drop_plan(), cfg.eval.thresholds, cfg.pipeline,
                                     cfg.tracker, cfg.eval.iou_min, cfg.eval.id_min_iou)
        _write(ctx.out / "sweep.txt", sweep.to_text())
        plotting.plot_sweep(sweep, ctx.out / "sweep.png")
    _write(ctx.out / "eval.txt", text)
    sys.stdout.write(text)
    return 0


class _ScaledScene:
    """A rendered scene whose frames and truth are resampled to the processing raster."""

    def __init__(self, ctx: Context):
        self.scene = ctx.rendered.scene
        self.truth = ctx.truth()
        self._ctx = ctx
        if ctx.frame_count != self.scene.frame_count:
            self.scene = replace(self.scene, frame_count=ctx.frame_count)

    def frames(self):
        w, h = self._ctx.raster
        for i, img in self._ctx.source():
            yield i, img if img.shape == (h, w) else as_gray(downscale(img, w, h))


def cmd_bench(args) -> int:
    ctx = _context(args)
    cfg = ctx.cfg
    if ctx.rendered is None:
        raise ConfigError("input.source", "bench needs a synthetic scene (input.source = scene)")
    b = cfg.bench
    pcfg, tcfg = cfg.pipeline, cfg.tracker
    if b.width:
        pcfg = replace(pcfg, width=b.width, height=b.height)
        tcfg = replace(tcfg, radius_scale=b.width / cfg.input.native_width)
    table = throughput_bench(ctx.rendered, cfg.drop_plan(), pcfg, tcfg, b.latency, b.tracker_delay, b.reps,
                             b.detections, b.frames, progress=log.info)
    text = table.to_text()
    _write(ctx.out / "bench.txt", text)
    plotting.plot_bench(table, ctx.out / "bench.png")
    sys.stdout.write(text)
    return 0


# -- entry point -----------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError("arguments", f"{message} (see '{self.prog} --help')")


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", required=True, help="config file, or 'demo' for the bundled demo scene")
    common.add_argument("--out", default="out", help="output directory (default: ./out)")
    common.add_argument("--seed", type=int, default=None, help="override the config seed")
    common.add_argument("--verbose", action="store_true", help="log per-batch timings to stderr")
    p = _Parser(prog="shopflow", description="Person detection/tracking pipeline and analytics.")
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run the pipeline; write events, tracks and summary")
    hm = sub.add_parser("heatmap", parents=[common], help="render per-slot heat-map overlays and visit stats")
    hm.add_argument("--tracks", help="reuse a tracks.txt from an earlier run instead of running")
    hm.add_argument("--events", help="event log paired with --tracks (default: events.log next to it)")
    sub.add_parser("eval", parents=[common], help="precision-recall, AP, id switches and miss-threshold sweep")
    sub.add_parser("bench", parents=[common], help="sequential vs pipelined throughput table")
    return p


COMMANDS = {"run": cmd_run, "heatmap": cmd_heatmap, "eval": cmd_eval, "bench": cmd_bench}


def _fail(code: int, msg: str) -> int:
    msg = " ".join(str(msg).split())
    print(f"shopflow: error: {msg}", file=sys.stderr)
    return code


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except ConfigError as exc:
        return _fail(1, exc)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(relativeCreated)8.0fms %(name)s: %(message)s", stream=sys.stderr)
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        return _fail(1, f"config: {exc}")
    except (PipelineError, NetpbmError, DetectionFormatError) as exc:
        return _fail(2, exc)
    except (OSError, ValueError) as exc:
        return _fail(2, f"{type(exc).__name__}: {exc}")


if __name__ == "__main__":
    sys.exit(main())
