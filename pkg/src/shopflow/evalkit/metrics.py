"""Precision-recall / AP scoring and id-switch counting."""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Mapping, Sequence

import numpy as np

from ..detect import BBox, Detection, iou


@dataclass(frozen=True)
class PRCurve:
    recall: np.ndarray
    precision: np.ndarray
    tp: np.ndarray  # per ranked prediction
    ap: float
    n_truth: int

    def to_text(self) -> str:
        lines = ["# recall precision"]
        lines += [f"{r:.6f} {p:.6f}" for r, p in zip(self.recall, self.precision)]
        lines.append(f"AP {self.ap:.6f}")
        return "\n".join(lines) + "\n"


def rank_predictions(predictions: Mapping[int, Sequence[Detection]]) -> list[tuple[int, int, Detection]]:
    """All predictions as ``(frame, index, det)`` by descending confidence.

    Ties keep frame order, then detection index.
    """
    flat = [(f, i, d) for f in sorted(predictions) for i, d in enumerate(predictions[f])]
    flat.sort(key=lambda t: -t[2].confidence)
    return flat


def pr_curve(
    predictions: Mapping[int, Sequence[Detection]],
    truth: Mapping[int, Sequence[BBox]],
    iou_min: float = 0.5,
) -> PRCurve:
    """Greedy confidence-ordered matching and exact all-points AP.

    Each prediction takes the unmatched ground-truth box of its frame with the
    highest IoU (lowest index on ties) provided IoU >= ``iou_min``. AP is the
    area under the raw precision-recall steps, i.e. the mean of the precision
    values at every true positive, taken over all ground-truth boxes. The sum
    is accumulated as an exact fraction and rounded once, so AP is the float
    nearest the true area.
    """
    if not 0.0 < iou_min < 1.0:
        raise ValueError(f"iou_min must lie in (0, 1), got {iou_min}")
    n_truth = sum(len(v) for v in truth.values())
    used = {f: [False] * len(v) for f, v in truth.items()}
    ranked = rank_predictions(predictions)
    tp = np.zeros(len(ranked), dtype=bool)
    for k, (f, _, det) in enumerate(ranked):
        gts = truth.get(f, ())
        best, best_j = -1.0, -1
        for j, g in enumerate(gts):
            if used[f][j]:
                continue
            o = iou(det.box, g)
            if o >= iou_min and o > best:
                best, best_j = o, j
        if best_j >= 0:
            used[f][best_j] = True
            tp[k] = True
    ctp = np.cumsum(tp)
    ranks = np.arange(1, len(ranked) + 1)
    precision = ctp / ranks if len(ranked) else np.zeros(0)
    recall = ctp / n_truth if n_truth else np.zeros(len(ranked))
    if n_truth == 0 or not tp.any():
        ap = 0.0
    else:
        hits = np.flatnonzero(tp) + 1
        area = sum(Fraction(k, int(r)) for k, r in enumerate(hits, start=1))
        ap = float(area / n_truth)
    return PRCurve(recall, precision, tp, ap, n_truth)


def id_switches(
    frame_tracks: Mapping[int, Sequence[tuple]],
    truth: Mapping[int, Sequence[tuple]],
    min_iou: float = 0.3,
) -> int:
    """Count identity changes of ground-truth agents.

    ``frame_tracks[f]`` holds ``(track_id, BBox, ...)`` and ``truth[f]`` holds
    ``(agent_id, BBox, ...)``. In every frame each agent is associated with the
    track overlapping it most (IoU >= ``min_iou``, lower id on ties); a switch
    is counted whenever that track differs from the agent's previous one.
    Frames without an overlapping track leave the association unchanged.
    """
    last: dict[int, int] = {}
    switches = 0
    for f in sorted(truth):
        tracks = frame_tracks.get(f, ())
        for agent_id, box, *_ in truth[f]:
            best = None
            for tid, tbox, *_ in tracks:
                o = iou(box, tbox)
                if o >= min_iou and (best is None or (-o, tid) < best):
                    best = (-o, tid)
            if best is None:
                continue
            tid = best[1]
            if agent_id in last and last[agent_id] != tid:
                switches += 1
            last[agent_id] = tid
    return switches
