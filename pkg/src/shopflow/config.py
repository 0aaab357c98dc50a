"""Run configuration: a flat ``key = value`` file with bracketed sections.

Sections: ``[run]``, ``[input]``, ``[pipeline]``, ``[tracker]``,
``[provider]``, ``[scene]``, ``[analytics]``, ``[eval]`` and ``[bench]``.
Every key is optional; a bare file reproduces the default operating point
(24-frame buffer with 8 detections, 512x288, 10% gate, 5 misses, 5 s memory).

Scene agents are written ``agent.<id> = <w> <h> <texture_seed> | <frame> <cx> <cy> | ...``,
occluders ``occluder.<n> = <x> <y> <w> <h>``, provider drops
``drop.<n> = <agent_id> <first_frame> <last_frame>`` and heat-map time slots
``slot.<n> = <first_frame> <last_frame>``.
"""

from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field, fields
from importlib import resources
from pathlib import Path

from .detect import BBox, DropPlan, DropRule
from .evalkit.scene import Agent, SyntheticScene
from .pipeline import PipelineConfig
from .track import TrackerConfig

BUNDLED = ("demo",)


class ConfigError(ValueError):
    """Invalid configuration; ``key`` names the offending ``section.key``."""

    def __init__(self, key: str, msg: str):
        super().__init__(f"{key}: {msg}")
        self.key = key


@dataclass
class InputSpec:
    source: str = "scene"  # scene | frames
    frames_dir: str = ""
    fps: float = 25.0
    native_width: int = 1280
    native_height: int = 720
    frame_limit: int = 0  # 0 = all frames


@dataclass
class ProviderSpec:
    kind: str = "scripted"  # scripted | file
    path: str = ""
    # raster of the coordinates in ``path``; 0 means the processing raster
    source_width: int = 0
    source_height: int = 0
    latency: float = 0.0
    sigma: float = 0.0
    confidence: str = "constant"
    confidence_value: float = 1.0
    confidence_low: float = 0.5
    drops: tuple = ()


@dataclass
class AnalyticsSpec:
    kernel: str = "tent"
    alpha: float = 0.6
    slots: tuple = ()  # ((first, last), ...); empty means the whole run


@dataclass
class EvalSpec:
    iou_min: float = 0.5
    id_min_iou: float = 0.3
    truth: str = ""  # detection file with ground truth for frame-directory input
    thresholds: tuple = (5, 10)  # miss thresholds of the sweep


@dataclass
class BenchSpec:
    reps: int = 3
    latency: float = 0.1
    tracker_delay: float = 0.0
    frames: int = 240
    width: int = 0  # 0 = pipeline width
    height: int = 0
    detections: tuple = (8,)  # detections_per_batch values to tabulate


@dataclass
class RunConfig:
    seed: int = 0
    mode: str = "pipelined"  # pipelined | sequential
    input: InputSpec = field(default_factory=InputSpec)
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    tracker: TrackerConfig = field(default_factory=TrackerConfig)
    provider: ProviderSpec = field(default_factory=ProviderSpec)
    scene: SyntheticScene | None = None
    analytics: AnalyticsSpec = field(default_factory=AnalyticsSpec)
    eval: EvalSpec = field(default_factory=EvalSpec)
    bench: BenchSpec = field(default_factory=BenchSpec)
    origin: str = field(default="", compare=False)

    def drop_plan(self) -> DropPlan:
        p = self.provider
        return DropPlan(list(p.drops), p.sigma, p.confidence, p.confidence_value, p.confidence_low, self.seed)

    def with_seed(self, seed: int) -> "RunConfig":
        return dataclasses.replace(self, seed=seed)


# -- parsing helpers -----------------------------------------------------------

_TRACKER_KEYS = [f.name for f in fields(TrackerConfig) if f.name not in ("radius_scale", "fps")]
_PIPELINE_KEYS = [f.name for f in fields(PipelineConfig)]


def _conv(key: str, raw: str, typ):
    try:
        if typ is bool:
            low = raw.strip().lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError
            return low in ("true", "yes", "1")
        if typ is int:
            return int(raw.strip())
        if typ is float:
            return float(raw.strip())
        return raw.strip()
    except ValueError:
        raise ConfigError(key, f"expected {typ.__name__}, got {raw.strip()!r}") from None


def _numbers(key: str, raw: str, n: int | None = None, typ=float) -> list:
    parts = raw.split()
    if n is not None and len(parts) != n:
        raise ConfigError(key, f"expected {n} values, got {len(parts)}")
    return [_conv(key, p, typ) for p in parts]


def _index(key: str, prefix: str) -> int:
    try:
        return int(key.rsplit(prefix, 1)[1])
    except ValueError:
        raise ConfigError(key, f"expected {prefix}<integer>") from None


def _typed(spec_cls, section: str, items: dict, allowed=None) -> dict:
    types = {f.name: f.type for f in fields(spec_cls)}
    out = {}
    for k, raw in items.items():
        if allowed is not None and k not in allowed:
            raise ConfigError(f"{section}.{k}", "unknown key")
        t = types.get(k)
        t = {"int": int, "float": float, "str": str, "bool": bool}.get(t, t) if isinstance(t, str) else t
        if t not in (int, float, str, bool):
            raise ConfigError(f"{section}.{k}", "unknown key")
        out[k] = _conv(f"{section}.{k}", raw, t)
    return out


def _build(cls, section: str, kwargs: dict):
    try:
        return cls(**kwargs)
    except ValueError as exc:
        # dataclass validators name the field in their message
        msg = str(exc)
        key = next((k for k in kwargs if k in msg), None) or next(iter(kwargs), "?")
        raise ConfigError(f"{section}.{key}", msg) from None


def _parse_agent(key: str, raw: str) -> Agent:
    aid = _index(key, "agent.")
    chunks = [c for c in raw.split("|")]
    if len(chunks) < 2:
        raise ConfigError(key, "expected '<w> <h> <seed> | <frame> <cx> <cy> | ...'")
    w, h, seed = _numbers(key, chunks[0], 3)
    path = []
    for c in chunks[1:]:
        f, cx, cy = _numbers(key, c, 3)
        if f != int(f):
            raise ConfigError(key, f"waypoint frame must be an integer, got {f}")
        path.append((int(f), cx, cy))
    if seed != int(seed):
        raise ConfigError(key, f"texture seed must be an integer, got {seed}")
    try:
        return Agent(aid, tuple(path), w, h, int(seed))
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def _resolve(key: str, value: str, base: Path, kind: str) -> str:
    if not value:
        return value
    p = Path(value)
    if not p.is_absolute():
        p = base / p
    ok = p.is_dir() if kind == "dir" else p.is_file()
    if not ok:
        raise ConfigError(key, f"{'directory' if kind == 'dir' else 'file'} not found: {p}")
    return str(p)


# -- public API ----------------------------------------------------------------

_SECTIONS = ("run", "input", "pipeline", "tracker", "provider", "scene", "analytics", "eval", "bench")


def parse_config(text: str, base_dir=".", origin: str = "<string>") -> RunConfig:
    """Parse and validate config text; relative paths resolve against ``base_dir``."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"),
                                   delimiters=("=",), empty_lines_in_values=False)
    cp.optionxform = str
    try:
        cp.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).replace("\n", " ")) from None
    for s in cp.sections():
        if s not in _SECTIONS:
            raise ConfigError(s, f"unknown section [{s}]")
    sec = {s: dict(cp.items(s)) if cp.has_section(s) else {} for s in _SECTIONS}
    base = Path(base_dir)

    run = _typed(RunConfig, "run", sec["run"], allowed={"seed", "mode"})
    if run.get("mode", "pipelined") not in ("pipelined", "sequential"):
        raise ConfigError("run.mode", f"expected pipelined or sequential, got {run['mode']!r}")

    inp = _build(InputSpec, "input", _typed(InputSpec, "input", sec["input"]))
    if inp.source not in ("scene", "frames"):
        raise ConfigError("input.source", f"expected scene or frames, got {inp.source!r}")
    if inp.fps <= 0:
        raise ConfigError("input.fps", "must be positive")
    if inp.native_width < 1 or inp.native_height < 1:
        raise ConfigError("input.native_width", "native raster must be at least 1x1")
    if inp.frame_limit < 0:
        raise ConfigError("input.frame_limit", "must be >= 0")
    if inp.source == "frames":
        if not inp.frames_dir:
            raise ConfigError("input.frames_dir", "required when source = frames")
        inp.frames_dir = _resolve("input.frames_dir", inp.frames_dir, base, "dir")

    pipe = _build(PipelineConfig, "pipeline", _typed(PipelineConfig, "pipeline", sec["pipeline"], _PIPELINE_KEYS))
    tk = _typed(TrackerConfig, "tracker", sec["tracker"], _TRACKER_KEYS)
    tk["fps"] = inp.fps
    tk["radius_scale"] = pipe.width / inp.native_width
    tracker = _build(TrackerConfig, "tracker", tk)

    prov_items = dict(sec["provider"])
    drops = []
    for k in sorted((k for k in prov_items if k.startswith("drop.")), key=lambda k: _index(k, "drop.")):
        a, f0, f1 = _numbers(f"provider.{k}", prov_items.pop(k), 3, int)
        if f1 < f0:
            raise ConfigError(f"provider.{k}", f"last frame {f1} precedes first frame {f0}")
        drops.append(DropRule(a, f0, f1))
    prov = _build(ProviderSpec, "provider", _typed(ProviderSpec, "provider", prov_items))
    prov.drops = tuple(drops)
    if prov.kind not in ("scripted", "file"):
        raise ConfigError("provider.kind", f"expected scripted or file, got {prov.kind!r}")
    if prov.confidence not in ("constant", "visibility", "uniform"):
        raise ConfigError("provider.confidence", f"expected constant, visibility or uniform, got {prov.confidence!r}")
    if prov.latency < 0 or prov.sigma < 0:
        raise ConfigError("provider.latency" if prov.latency < 0 else "provider.sigma", "must be >= 0")
    for k in ("confidence_value", "confidence_low"):
        if not 0.0 <= getattr(prov, k) <= 1.0:
            raise ConfigError(f"provider.{k}", "must lie in [0, 1]")
    if (prov.source_width == 0) != (prov.source_height == 0) or prov.source_width < 0 or prov.source_height < 0:
        raise ConfigError("provider.source_width", "source_width and source_height must both be set and positive")
    if prov.kind == "file":
        if not prov.path:
            raise ConfigError("provider.path", "required when kind = file")
        prov.path = _resolve("provider.path", prov.path, base, "file")
    elif inp.source != "scene":
        raise ConfigError("provider.kind", "scripted provider needs input.source = scene")

    scene = None
    sc_items = dict(sec["scene"])
    if inp.source == "scene":
        agents = []
        for k in sorted((k for k in sc_items if k.startswith("agent.")), key=lambda k: _index(k, "agent.")):
            agents.append(_parse_agent(f"scene.{k}", sc_items.pop(k)))
        occ = []
        for k in sorted((k for k in sc_items if k.startswith("occluder.")), key=lambda k: _index(k, "occluder.")):
            x, y, w, h = _numbers(f"scene.{k}", sc_items.pop(k), 4)
            try:
                occ.append(BBox(x, y, w, h))
            except ValueError as exc:
                raise ConfigError(f"scene.{k}", str(exc)) from None
        allowed = {"width", "height", "frame_count", "background_seed"}
        kw = _typed(SyntheticScene, "scene", sc_items, allowed)
        kw["fps"] = inp.fps
        try:
            scene = SyntheticScene(agents=tuple(agents), occluders=tuple(occ), **kw)
            scene.validate()
        except ValueError as exc:
            msg = str(exc)
            key = next((f"scene.agent.{a.id}" for a in agents if f"agent {a.id} " in msg), "scene.frame_count")
            raise ConfigError(key, msg) from None
    elif sc_items:
        raise ConfigError(f"scene.{next(iter(sc_items))}", "scene keys need input.source = scene")

    an_items = dict(sec["analytics"])
    slots = []
    for k in sorted((k for k in an_items if k.startswith("slot.")), key=lambda k: _index(k, "slot.")):
        f0, f1 = _numbers(f"analytics.{k}", an_items.pop(k), 2, int)
        if f1 < f0 or f0 < 0:
            raise ConfigError(f"analytics.{k}", f"bad frame range {f0}..{f1}")
        slots.append((f0, f1))
    an = _build(AnalyticsSpec, "analytics", _typed(AnalyticsSpec, "analytics", an_items))
    an.slots = tuple(slots)
    if an.kernel not in ("tent", "gaussian", "uniform"):
        raise ConfigError("analytics.kernel", f"expected tent, gaussian or uniform, got {an.kernel!r}")
    if not 0.0 <= an.alpha <= 1.0:
        raise ConfigError("analytics.alpha", "must lie in [0, 1]")

    ev_items = dict(sec["eval"])
    ev_thresholds = None
    if "thresholds" in ev_items:
        ev_thresholds = tuple(_numbers("eval.thresholds", ev_items.pop("thresholds"), None, int))
        if not ev_thresholds or min(ev_thresholds) < 1:
            raise ConfigError("eval.thresholds", "needs one or more positive integers")
    ev = _build(EvalSpec, "eval", _typed(EvalSpec, "eval", ev_items))
    if ev_thresholds is not None:
        ev.thresholds = ev_thresholds
    for k in ("iou_min", "id_min_iou"):
        if not 0.0 < getattr(ev, k) < 1.0:
            raise ConfigError(f"eval.{k}", "must lie in (0, 1)")
    if ev.truth:
        ev.truth = _resolve("eval.truth", ev.truth, base, "file")

    b_items = dict(sec["bench"])
    b_lists = {}
    for k in ("detections",):
        if k in b_items:
            vals = _numbers(f"bench.{k}", b_items.pop(k), None, int)
            if not vals or min(vals) < 1:
                raise ConfigError(f"bench.{k}", "needs one or more positive integers")
            b_lists[k] = tuple(vals)
    bench = _build(BenchSpec, "bench", _typed(BenchSpec, "bench", b_items))
    for k, v in b_lists.items():
        setattr(bench, k, v)
    if bench.reps < 1:
        raise ConfigError("bench.reps", "must be >= 1")
    if bench.latency < 0 or bench.tracker_delay < 0:
        raise ConfigError("bench.latency", "latencies must be >= 0")
    if bench.frames < 1:
        raise ConfigError("bench.frames", "must be >= 1")
    if (bench.width == 0) != (bench.height == 0):
        raise ConfigError("bench.width", "width and height must be set together")
    for d in bench.detections:
        if pipe.buffer_size % d:
            raise ConfigError("bench.detections", f"buffer_size {pipe.buffer_size} is not divisible by {d}")

    return RunConfig(seed=run.get("seed", 0), mode=run.get("mode", "pipelined"), input=inp, pipeline=pipe,
                     tracker=tracker, provider=prov, scene=scene, analytics=an, eval=ev, bench=bench,
                     origin=origin)


def bundled_path(name: str) -> Path:
    return Path(str(resources.files("shopflow") / "data" / f"{name}.ini"))


def load_config(path) -> RunConfig:
    """Load a config file; a bare bundled name such as ``demo`` selects a packaged config."""
    p = Path(path)
    if not p.exists() and str(path) in BUNDLED:
        p = bundled_path(str(path))
    if not p.is_file():
        raise ConfigError("--config", f"config file not found: {path}")
    return parse_config(p.read_text(), base_dir=p.parent, origin=str(p))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def serialize_config(cfg: RunConfig) -> str:
    """Render ``cfg`` so that :func:`parse_config` gives back an equal config."""
    out = ["[run]", f"seed = {cfg.seed}", f"mode = {cfg.mode}", "", "[input]"]
    out += [f"{f.name} = {_fmt(getattr(cfg.input, f.name))}" for f in fields(InputSpec)
            if f.name != "frames_dir" or cfg.input.frames_dir]
    out += ["", "[pipeline]"] + [f"{k} = {_fmt(getattr(cfg.pipeline, k))}" for k in _PIPELINE_KEYS]
    out += ["", "[tracker]"] + [f"{k} = {_fmt(getattr(cfg.tracker, k))}" for k in _TRACKER_KEYS]
    p = cfg.provider
    out += ["", "[provider]"]
    out += [f"{f.name} = {_fmt(getattr(p, f.name))}" for f in fields(ProviderSpec)
            if f.name not in ("drops", "path") or (f.name == "path" and p.path)]
    out += [f"drop.{i} = {r.agent_id} {r.start} {r.end}" for i, r in enumerate(p.drops, 1)]
    if cfg.scene is not None:
        s = cfg.scene
        out += ["", "[scene]", f"width = {s.width}", f"height = {s.height}", f"frame_count = {s.frame_count}",
                f"background_seed = {s.background_seed}"]
        for a in s.agents:
            wps = " | ".join(f"{f} {_fmt(float(cx))} {_fmt(float(cy))}" for f, cx, cy in a.path)
            out.append(f"agent.{a.id} = {_fmt(float(a.w))} {_fmt(float(a.h))} {a.texture_seed} | {wps}")
        out += [f"occluder.{i} = {_fmt(o.x)} {_fmt(o.y)} {_fmt(o.w)} {_fmt(o.h)}"
                for i, o in enumerate(s.occluders, 1)]
    a = cfg.analytics
    out += ["", "[analytics]", f"kernel = {a.kernel}", f"alpha = {_fmt(a.alpha)}"]
    out += [f"slot.{i} = {f0} {f1}" for i, (f0, f1) in enumerate(a.slots, 1)]
    e = cfg.eval
    out += ["", "[eval]", f"iou_min = {_fmt(e.iou_min)}", f"id_min_iou = {_fmt(e.id_min_iou)}"]
    if e.truth:
        out.append(f"truth = {e.truth}")
    out.append(f"thresholds = {' '.join(map(str, e.thresholds))}")
    b = cfg.bench
    out += ["", "[bench]"]
    for f in fields(BenchSpec):
        v = getattr(b, f.name)
        out.append(f"{f.name} = {' '.join(map(str, v)) if isinstance(v, tuple) else _fmt(v)}")
    return "\n".join(out) + "\n"
