import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from shopflow.detect import BBox, Detection
from shopflow.evalkit.scene import shifted_texture_pair
from shopflow.imgproc import build_pyramid
from shopflow.track import (
    Event, Track, TrackState, Tracker, TrackerConfig, best_recovery, gradient_of, greedy_assign,
    match_detections, parse_event_line, ray_distance,
)


def det(cx, cy, w=30, h=60, conf=0.9):
    return Detection(BBox.from_center(cx, cy, w, h), conf)


def track_with_history(tid, centers, w=30, h=60):
    cx, cy = centers[-1]
    return Track(tid, BBox.from_center(cx, cy, w, h), TrackState.LOST,
                 history=[(i * 3, c) for i, c in enumerate(centers)], lost_since=0)


# -- config --------------------------------------------------------------------

def test_config_defaults():
    cfg = TrackerConfig()
    assert cfg.miss_threshold == 5
    assert cfg.lost_memory == 5.0
    assert cfg.confidence_threshold == 0.10
    assert cfg.recovery_radius == 200.0
    assert cfg.recovery_radius_px == pytest.approx(80.0)
    assert cfg.lost_memory_frames == 125


@pytest.mark.parametrize("kw", [dict(miss_threshold=0), dict(lost_memory=-1), dict(fps=0),
                                dict(iou_match_threshold=1.5), dict(seed_margin=0.5), dict(gradient_window=1)])
def test_config_rejects(kw):
    with pytest.raises(ValueError):
        TrackerConfig(**kw)


# -- matching ------------------------------------------------------------------

def test_match_exact_overlap():
    t = Track(1, BBox(10, 10, 20, 40))
    a = match_detections([t], [Detection(BBox(10, 10, 20, 40))])
    assert a.pairs == [(1, 0)] and not a.unmatched_tracks and not a.unmatched_detections


def test_greedy_prefers_higher_iou():
    a = greedy_assign([[0.4, 0.6]], [1], 0.3)
    assert a.pairs == [(1, 1)] and a.unmatched_detections == [0]


def test_greedy_is_not_optimal():
    a = greedy_assign([[0.5, 0.45], [0.45, 0.1]], [1, 2], 0.3)
    assert a.pairs == [(1, 0)]
    assert a.unmatched_tracks == [2] and a.unmatched_detections == [1]


def test_greedy_ties_lower_track_then_detection():
    a = greedy_assign([[0.5, 0.5], [0.5, 0.5]], [7, 3], 0.3)
    assert a.pairs == [(3, 0), (7, 1)]


def _oracle_greedy(scores, ids, thr):
    scores = [list(r) for r in scores]
    pairs, used_t, used_d = [], set(), set()
    while True:
        best = None
        for r, tid in enumerate(ids):
            for c, s in enumerate(scores[r]):
                if tid in used_t or c in used_d or s < thr:
                    continue
                key = (-s, tid, c)
                if best is None or key < best:
                    best = key
        if best is None:
            return sorted(pairs)
        pairs.append((best[1], best[2]))
        used_t.add(best[1])
        used_d.add(best[2])


@given(st.integers(0, 5), st.integers(0, 5), st.data())
def test_greedy_matches_oracle_and_is_one_to_one(n_t, n_d, data):
    grid = st.sampled_from([0.0, 0.1, 0.3, 0.45, 0.5, 0.8, 1.0])
    scores = [[data.draw(grid) for _ in range(n_d)] for _ in range(n_t)]
    ids = data.draw(st.permutations(list(range(1, n_t + 1))))
    a = greedy_assign(np.array(scores).reshape(n_t, n_d), ids, 0.3)
    assert a.pairs == _oracle_greedy(scores, ids, 0.3)
    ts = [p[0] for p in a.pairs]
    ds = [p[1] for p in a.pairs]
    assert len(set(ts)) == len(ts) and len(set(ds)) == len(ds)
    assert sorted(ts + a.unmatched_tracks) == sorted(ids)
    assert sorted(ds + a.unmatched_detections) == list(range(n_d))


# -- gradient and recovery -----------------------------------------------------

def test_gradient_examples():
    assert gradient_of(track_with_history(1, [(0, 0), (1, 0), (2, 0)])) == (1.0, 0.0)
    assert gradient_of(track_with_history(1, [(5, 5)])) is None
    g = gradient_of(track_with_history(1, [(0, 0), (1, 1), (0, 0), (1, 1), (2, 2)]))
    assert g == pytest.approx((math.sqrt(0.5), math.sqrt(0.5)))
    assert gradient_of(track_with_history(1, [(0, 0), (0.3, 0.3), (0.5, 0.2)])) is None


def test_gradient_uses_last_k():
    g = gradient_of(track_with_history(1, [(50, 50), (0, 0), (0, 1), (0, 2), (0, 3), (0, 4)]), k=5)
    assert g == (0.0, 1.0)


def test_ray_distance():
    assert ray_distance((0, 0), (1, 0), (10, 1)) == 1.0
    assert ray_distance((0, 0), (0, 1), (10, 1)) == 10.0
    assert ray_distance((0, 0), (1, 0), (-3, 4)) == 5.0  # behind the anchor


def test_recover_within_radius():
    cfg = TrackerConfig(radius_scale=1.0)
    t = track_with_history(4, [(100, 100)])
    assert best_recovery([t], det(150, 150), cfg) == 4


def test_recover_by_quadrant_outside_radius():
    cfg = TrackerConfig(radius_scale=1.0)
    t = track_with_history(4, [(90, 90), (95, 95), (100, 100)])
    assert best_recovery([t], det(900, 600), cfg) == 4
    assert best_recovery([t], det(900, 50), cfg) is None  # wrong quadrant, far away


def test_recover_zero_component_matches_both_signs():
    cfg = TrackerConfig(radius_scale=1.0)
    t = track_with_history(4, [(80, 100), (90, 100), (100, 100)])
    assert best_recovery([t], det(900, 10), cfg) == 4
    assert best_recovery([t], det(900, 600), cfg) == 4


def test_recover_prefers_shortest_perpendicular_distance():
    cfg = TrackerConfig(radius_scale=1.0)
    right = track_with_history(1, [(90, 100), (100, 100)])
    down = track_with_history(2, [(100, 90), (100, 100)])
    assert best_recovery([down, right], det(110, 101), cfg) == 1


def test_scaled_radius_rejects_far_detection():
    cfg = TrackerConfig()  # 200 px at native, 80 px here
    t = track_with_history(1, [(100, 100)])
    assert best_recovery([t], det(170, 100), cfg) == 1
    assert best_recovery([t], det(190, 100), cfg) is None


def test_try_recover_lost_resets_history():
    tr = Tracker(TrackerConfig(radius_scale=1.0))
    tr.on_detection_frame(0, [det(100, 100)])
    t = tr.tracks[1]
    t.state, t.lost_since = TrackState.LOST, 0
    assert tr.try_recover_lost(det(150, 150), 9) == 1
    assert t.state is TrackState.ACTIVE and t.miss_count == 0 and t.lost_since is None
    assert t.history == [(9, (150.0, 150.0))]


# -- detection frames ----------------------------------------------------------

def run_frames(tracker, seq, start=0, step=3):
    events = []
    for i, dets in enumerate(seq):
        events += tracker.on_detection_frame(start + i * step, dets)
    return events


def test_steady_agent_single_track():
    tr = Tracker()
    for i in range(10):
        tr.on_detection_frame(3 * i, [det(100, 100)])
        assert tr.tracks[1].miss_count == 0
    assert list(tr.tracks) == [1]


def test_four_misses_keep_id():
    tr = Tracker()
    run_frames(tr, [[det(100, 100)]] + [[]] * 4 + [[det(101, 100)]])
    assert list(tr.tracks) == [1]
    assert tr.tracks[1].state is TrackState.ACTIVE and tr.tracks[1].miss_count == 0


def test_fifth_miss_goes_lost():
    tr = Tracker()
    events = run_frames(tr, [[det(100, 100)]] + [[]] * 5)
    assert [e.kind for e in events if e.kind != "miss"] == ["spawn", "lost"]
    lost = [e for e in events if e.kind == "lost"][0]
    assert lost.frame == 15 and tr.tracks[1].state is TrackState.LOST


def test_lost_track_recovered_not_respawned():
    tr = Tracker()
    events = run_frames(tr, [[det(100, 100)]] + [[]] * 5 + [[det(130, 100)]])
    assert [e.kind for e in events if e.kind != "miss"] == ["spawn", "lost", "recover"]
    assert list(tr.tracks) == [1]


def test_gate_is_strict():
    tr = Tracker()
    tr.on_detection_frame(0, [det(100, 100, conf=0.10)])
    assert not tr.tracks
    tr.on_detection_frame(3, [det(100, 100, conf=0.11)])
    assert list(tr.tracks) == [1]


# -- purge ---------------------------------------------------------------------

def lost_tracker(cfg, frame):
    tr = Tracker(cfg)
    tr.on_detection_frame(0, [det(100, 100)])
    t = tr.tracks[1]
    t.state, t.lost_since = TrackState.LOST, frame
    return tr


def test_purge_strictly_after_memory():
    tr = lost_tracker(TrackerConfig(fps=25, lost_memory=5), 100)
    assert tr.purge_expired(225) == []
    ev = tr.purge_expired(226)
    assert [(e.kind, e.track_id) for e in ev] == [("dead", 1)]
    assert tr.tracks[1].state is TrackState.DEAD


def test_zero_memory_dies_next_purge():
    tr = lost_tracker(TrackerConfig(lost_memory=0), 100)
    assert tr.purge_expired(100) == []
    assert tr.purge_expired(101)[0].kind == "dead"


def test_purge_skips_active():
    tr = Tracker()
    tr.on_detection_frame(0, [det(100, 100)])
    assert tr.purge_expired(10_000) == []


def test_dead_never_revived():
    tr = lost_tracker(TrackerConfig(lost_memory=0), 0)
    tr.on_detection_frame(3, [det(100, 100)])
    assert tr.tracks[1].state is TrackState.DEAD
    assert [t.id for t in tr.active] == [2]


# -- flow propagation ----------------------------------------------------------

def seeded_tracker(img, box):
    tr = Tracker()
    tr.on_detection_frame(0, [Detection(box, 0.9)], image=img)
    return tr


def test_static_scene_boxes_unchanged():
    a, _ = shifted_texture_pair(1, (0, 0))
    box = BBox(200, 100, 40, 80)
    tr = seeded_tracker(a, box)
    p = build_pyramid(a, 3)
    tr.propagate(1, p, p)
    b = tr.tracks[1].box
    assert abs(b.x - box.x) < 0.01 and abs(b.y - box.y) < 0.01


def test_translated_scene_moves_box():
    a, b = shifted_texture_pair(2, (3, -2))
    box = BBox(200, 100, 40, 80)
    tr = seeded_tracker(a, box)
    tr.propagate(1, build_pyramid(a, 3), build_pyramid(b, 3))
    (cx, cy), (ox, oy) = tr.tracks[1].center, box.center
    assert math.hypot(cx - ox - 3, cy - oy + 2) <= 0.5


def test_textureless_keeps_box_and_flags_reseed():
    flat = np.full((288, 512), 90, np.uint8)
    box = BBox(200, 100, 40, 80)
    tr = seeded_tracker(flat, box)
    p = build_pyramid(flat, 3)
    tr.propagate(1, p, p)
    assert tr.tracks[1].box == box and tr.tracks[1].needs_reseed


def test_seed_margin_keeps_points_inside():
    a, _ = shifted_texture_pair(3, (0, 0))
    tr = seeded_tracker(a, BBox(100, 100, 40, 80))
    pts = tr.tracks[1].points
    assert len(pts) > 0
    assert pts[:, 0].min() > 104 and pts[:, 0].max() < 136
    assert pts[:, 1].min() > 108 and pts[:, 1].max() < 172


# -- event lines ---------------------------------------------------------------

def test_event_line_round_trip():
    e = Event(12, "recover", 3, BBox(1.5, 2.25, 30, 60))
    assert e.line() == "12 recover 3 1.500 2.250 30.000 60.000"
    assert parse_event_line(e.line()) == e
    with pytest.raises(ValueError):
        parse_event_line("12 teleport 3 1 2 3 4")


# -- lifecycle invariants over random detection streams -------------------------

centers = st.tuples(st.integers(20, 480), st.integers(40, 250))


@given(st.lists(st.lists(centers, max_size=4), min_size=1, max_size=40), st.integers(1, 6),
       st.floats(0, 1.0))
def test_lifecycle_invariants(frames, miss_threshold, lost_memory):
    cfg = TrackerConfig(miss_threshold=miss_threshold, lost_memory=lost_memory)
    tr = Tracker(cfg)
    dead: set[int] = set()
    seen_ids: list[int] = []
    for i, cs in enumerate(frames):
        events = tr.on_detection_frame(3 * i, [det(x, y) for x, y in cs])
        for e in events:
            if e.kind == "spawn":
                assert e.track_id not in seen_ids
                seen_ids.append(e.track_id)
        matched = [e.track_id for e in events if e.kind in ("match", "recover", "spawn")]
        assert len(matched) == len(set(matched))
        assert len(matched) <= len(cs)
        active_ids = {t.id for t in tr.active}
        assert not active_ids & dead
        for t in tr.tracks.values():
            assert t.miss_count >= 0
            if t.state is TrackState.ACTIVE:
                assert t.miss_count < miss_threshold
            fs = [h[0] for h in t.history]
            assert all(b > a for a, b in zip(fs, fs[1:]))
        dead |= {t.id for t in tr.tracks.values() if t.state is TrackState.DEAD}
    assert seen_ids == sorted(seen_ids)


def test_n_agents_perfect_detections_n_ids():
    tr = Tracker()
    for i in range(30):
        tr.on_detection_frame(3 * i, [det(50 + 2 * i, 100), det(300, 80 + i), det(400 - i, 200)])
    assert len(tr.tracks) == 3


def test_config_replace_keeps_validation():
    with pytest.raises(ValueError):
        dataclasses.replace(TrackerConfig(), miss_threshold=0)
