import numpy as np
import pytest
from hypothesis import given, strategies as st

from shopflow.analytics import (
    HeatMap, accumulate, argmax_pixel, collect_stats, colormap, heatmap_from_tracks, normalize,
    read_event_log, render_overlay,
)
from shopflow.detect import BBox
from shopflow.netpbm import read_netpbm
from shopflow.track import Event

import oracles
from golden import GOLDEN, golden_overlay

boxes = st.builds(BBox, st.floats(-20, 100), st.floats(-20, 80), st.floats(1, 60), st.floats(1, 60))


def test_three_by_three_weights():
    hm = accumulate(HeatMap(3, 3), BBox.from_center(1, 1, 3, 3))
    third = 1 / 3
    expect = np.outer([third, 1, third], [third, 1, third])
    assert np.allclose(hm.acc, expect)
    assert hm.acc[1, 1] == 1.0 and hm.acc[0, 0] == pytest.approx(1 / 9)


@given(boxes)
def test_weights_match_tent_formula(box):
    hm = accumulate(HeatMap(64, 48), box)
    for y in range(0, 48, 3):
        for x in range(0, 64, 3):
            inside = box.x <= x <= box.x + box.w and box.y <= y <= box.y + box.h
            ref = oracles.tent_weight(x, y, (box.x, box.y, box.w, box.h)) if inside else 0.0
            assert hm.acc[y, x] == pytest.approx(ref, abs=1e-12)


def test_centre_pixel_gets_max_and_corners_near_zero():
    box = BBox.from_center(30, 20, 21, 15)
    hm = accumulate(HeatMap(64, 48), box)
    assert hm.acc[20, 30] == hm.acc.max() == 1.0
    assert hm.acc[13, 20] < 0.01  # corner pixel of the box


def test_double_accumulation_doubles():
    box = BBox(3.3, 4.7, 20, 11)
    one = accumulate(HeatMap(40, 30), box).acc
    two = accumulate(accumulate(HeatMap(40, 30), box), box).acc
    assert np.array_equal(two, 2 * one)


def test_disjoint_box_is_noop():
    hm = accumulate(HeatMap(10, 10), BBox(50, 50, 5, 5))
    assert not hm.acc.any()


@given(st.lists(boxes, min_size=1, max_size=6), st.randoms())
def test_accumulation_order_independent(bs, rnd):
    a = HeatMap(100, 80)
    for b in bs:
        accumulate(a, b)
    shuffled = list(bs)
    rnd.shuffle(shuffled)
    c = HeatMap(100, 80)
    for b in shuffled:
        accumulate(c, b)
    assert np.allclose(a.acc, c.acc, rtol=0, atol=1e-12)


@given(st.floats(0, 40), st.floats(0, 40), st.floats(10, 60), st.floats(10, 60))
def test_tent_mass_riemann(x, y, w, h):
    hm = accumulate(HeatMap(120, 120), BBox(x, y, w, h))
    analytic = (w / 2) * (h / 2)
    assert abs(hm.acc.sum() - analytic) <= 0.02 * analytic


def test_normalize_examples():
    hm = accumulate(HeatMap(30, 30), BBox(2.2, 3.1, 11, 7))
    assert normalize(hm).max() == 1.0
    assert not normalize(HeatMap(5, 5)).any()
    scaled = HeatMap(30, 30, acc=hm.acc * 7)
    assert np.allclose(normalize(scaled), normalize(hm))


@given(st.lists(boxes, min_size=1, max_size=5))
def test_normalize_range_and_argmax(bs):
    hm = HeatMap(100, 80)
    for b in bs:
        accumulate(hm, b)
    n = normalize(hm)
    assert n.min() >= 0 and n.max() <= 1
    if hm.acc.any():
        assert n.max() == 1.0
        assert argmax_pixel(n) == argmax_pixel(hm.acc)


def jitter_hit_rate(kernel, trials=1000, boxes_per_trial=240, seed=0):
    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(trials):
        hm = HeatMap(200, 240, kernel=kernel)
        for dx, dy in rng.uniform(-2, 2, (boxes_per_trial, 2)):
            accumulate(hm, BBox.from_center(100 + dx, 120 + dy, 40, 80))
        hits += argmax_pixel(hm.acc) == (100, 120)
    return hits / trials


def test_flat_kernel_does_not_localise():
    # contrast for the acceptance Monte Carlo: a flat box kernel has a plateau
    assert jitter_hit_rate("uniform", trials=100) < 0.5


def test_colormap_stops():
    v = np.array([0, 0.25, 0.5, 0.75, 1.0])
    assert colormap(v).tolist() == [[0, 0, 255], [0, 255, 255], [0, 255, 0], [255, 255, 0], [255, 0, 0]]
    assert colormap(np.array([0.125]))[0].tolist() == [0, 127.5, 255]


def test_overlay_zero_is_background():
    bg = np.random.default_rng(0).integers(0, 256, (10, 12)).astype(np.uint8)
    out = render_overlay(np.zeros((10, 12)), bg)
    assert out.shape == (10, 12, 3)
    assert np.array_equal(out, np.repeat(bg[..., None], 3, axis=2))


def test_overlay_full_value_is_sixty_percent_red():
    bg = np.full((4, 4), 100, np.uint8)
    v = np.zeros((4, 4))
    v[1, 2] = 1.0
    out = render_overlay(v, bg)
    # 0.4*100 + 0.6*255 = 193, 0.4*100 + 0 = 40
    assert out[1, 2].tolist() == [193, 40, 40]


def test_overlay_resamples_native_background_and_rejects_aspect():
    bg = np.full((720, 1280), 50, np.uint8)
    assert render_overlay(np.zeros((288, 512)), bg).shape == (288, 512, 3)
    with pytest.raises(ValueError):
        render_overlay(np.zeros((288, 512)), np.zeros((100, 100), np.uint8))
    with pytest.raises(ValueError):
        render_overlay(np.zeros((4, 4)), np.zeros((4, 4, 2), np.uint8))


def test_golden_overlay():
    assert golden_overlay().tobytes() == read_netpbm(GOLDEN).tobytes()


def test_heatmap_from_tracks_slot_filter():
    ft = {0: [(1, BBox(0, 0, 4, 4), 1.0)], 5: [(1, BBox(10, 10, 4, 4), 1.0)]}
    hm = heatmap_from_tracks(ft, 20, 20, frames=range(0, 3))
    assert hm.acc[2, 2] == 1.0 and hm.acc[12, 12] == 0.0 and hm.frame_span == (0, 0)


def test_heatmap_text_matrix():
    hm = accumulate(HeatMap(3, 2), BBox.from_center(1, 0.5, 3, 3))
    rows = hm.to_text().splitlines()
    assert len(rows) == 2 and len(rows[0].split()) == 3


# -- stats ----------------------------------------------------------------------

def events_for(tid, frames, box=BBox(0, 0, 10, 10)):
    return [Event(f, "spawn" if i == 0 else "match", tid, box) for i, f in enumerate(frames)]


def test_dwell_time():
    stats = collect_stats(events_for(1, range(250)), 25.0)
    assert stats.visits[0].dwell == pytest.approx(9.96)


def test_stationary_path_zero_and_visitors():
    ev = events_for(1, range(10)) + events_for(2, range(5)) + events_for(3, range(3))
    stats = collect_stats(ev, 25.0)
    assert stats.visitors == 3
    assert all(v.path_length == 0 for v in stats.visits)


def test_path_length_and_dead_tracks():
    ev = [Event(0, "spawn", 1, BBox(0, 0, 2, 2)), Event(3, "match", 1, BBox(3, 4, 2, 2)),
          Event(6, "lost", 1, BBox(3, 4, 2, 2)), Event(200, "dead", 1, BBox(3, 4, 2, 2))]
    stats = collect_stats(ev, 25.0)
    v = stats.visits[0]
    assert (v.first_seen, v.last_seen, v.path_length) == (0, 3, 5.0)


def test_stats_from_log_lines_and_bad_line():
    lines = [e.line() for e in events_for(4, [0, 3])]
    assert collect_stats(lines, 25.0).visitors == 1
    with pytest.raises(ValueError, match="line 2"):
        read_event_log([lines[0], "garbage"])


def test_stats_text_block():
    text = collect_stats(events_for(1, range(26)), 25.0).to_text()
    assert "[stats]" in text and "visitors=1" in text and "mean_dwell_s=1.000" in text
