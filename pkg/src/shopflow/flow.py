"""Pyramidal Lucas-Kanade sparse optical flow."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .imgproc import Pyramid

WINDOW = 21
LEVELS = 3
MAX_ITERS = 30
EPS = 0.01
MIN_EIG = 1e-4
MAX_RESIDUAL = 20.0
MIN_SURVIVORS = 3


@dataclass(frozen=True)
class FlowResult:
    """Per-point outcome of :func:`lk_track`.

    ``points_next`` is an ``(N, 2)`` array of ``(x, y)``; rows whose ``status``
    is False carry no meaning.
    """

    points_next: np.ndarray
    status: np.ndarray
    residual: np.ndarray

    def __len__(self) -> int:
        return len(self.status)


# Scharr smoothing taps, matching imgproc.gradients
_SA, _SB = 3.0 / 16.0, 10.0 / 16.0


@njit(cache=True, nogil=True)
def _patch(img, x, y, r, out):
    """Bilinear samples at ``(x + j, y + i)`` for ``i, j`` in ``[-r, r]``.

    Neighbour indices are clamped to the image, which equals sampling the
    edge-replicated raster. Returns False for non-finite coordinates.
    """
    if not (np.isfinite(x) and np.isfinite(y)):
        return False
    h, w = img.shape
    # beyond these limits every sample is already an edge value
    x = min(max(x, -(r + 1.0)), w + r + 0.0)
    y = min(max(y, -(r + 1.0)), h + r + 0.0)
    bx, by = np.floor(x), np.floor(y)
    fx, fy = x - bx, y - by
    ix, iy = int(bx) - r, int(by) - r
    n = 2 * r + 1
    w00 = (1.0 - fx) * (1.0 - fy)
    w01 = fx * (1.0 - fy)
    w10 = (1.0 - fx) * fy
    w11 = fx * fy
    if ix >= 0 and iy >= 0 and ix + n < w and iy + n < h:
        # whole window inside: no clamping needed
        for i in range(n):
            for j in range(n):
                out[i, j] = (w00 * img[iy + i, ix + j] + w01 * img[iy + i, ix + j + 1]
                             + w10 * img[iy + i + 1, ix + j] + w11 * img[iy + i + 1, ix + j + 1])
        return True
    for i in range(n):
        r0 = min(max(iy + i, 0), h - 1)
        r1 = min(max(iy + i + 1, 0), h - 1)
        for j in range(n):
            c0 = min(max(ix + j, 0), w - 1)
            c1 = min(max(ix + j + 1, 0), w - 1)
            out[i, j] = w00 * img[r0, c0] + w01 * img[r0, c1] + w10 * img[r1, c0] + w11 * img[r1, c1]
    return True


@njit(cache=True, nogil=True)
def _lk_level(prev, nxt, u, guess, active, half, max_iters, eps, min_eig, disp, ok, resid, want_resid):
    """One pyramid level of iterative LK for every active point.

    Gradient windows are Scharr derivatives of a template patch one pixel
    wider than the window, so no full-image gradient raster is needed.
    """
    n = u.shape[0]
    win = 2 * half + 1
    patch = np.empty((win + 2, win + 2))
    warped = np.empty((win, win))
    gx = np.empty((win, win))
    gy = np.empty((win, win))
    norm = win * win * 255.0 * 255.0
    for k in range(n):
        if not active[k]:
            continue
        if not _patch(prev, u[k, 0], u[k, 1], half + 1, patch):
            continue
        gxx = 0.0
        gyy = 0.0
        gxy = 0.0
        for i in range(win):
            for j in range(win):
                ix = 0.5 * (_SA * (patch[i, j + 2] - patch[i, j]) + _SB * (patch[i + 1, j + 2] - patch[i + 1, j])
                            + _SA * (patch[i + 2, j + 2] - patch[i + 2, j]))
                iy = 0.5 * (_SA * (patch[i + 2, j] - patch[i, j]) + _SB * (patch[i + 2, j + 1] - patch[i, j + 1])
                            + _SA * (patch[i + 2, j + 2] - patch[i, j + 2]))
                gx[i, j] = ix
                gy[i, j] = iy
                gxx += ix * ix
                gyy += iy * iy
                gxy += ix * iy
        lam = 0.5 * (gxx + gyy - np.sqrt((gxx - gyy) ** 2 + 4.0 * gxy * gxy))
        det = gxx * gyy - gxy * gxy
        if lam / norm < min_eig or det <= 0.0:
            continue
        ok[k] = True
        x0 = u[k, 0] + guess[k, 0]
        y0 = u[k, 1] + guess[k, 1]
        dx = 0.0
        dy = 0.0
        for _ in range(max_iters):
            if not _patch(nxt, x0 + dx, y0 + dy, half, warped):
                break
            bx = 0.0
            by = 0.0
            for i in range(win):
                for j in range(win):
                    e = patch[i + 1, j + 1] - warped[i, j]
                    bx += e * gx[i, j]
                    by += e * gy[i, j]
            sx = (gyy * bx - gxy * by) / det
            sy = (gxx * by - gxy * bx) / det
            dx += sx
            dy += sy
            if np.sqrt(sx * sx + sy * sy) < eps:
                break
        disp[k, 0] = dx
        disp[k, 1] = dy
        if want_resid and _patch(nxt, x0 + dx, y0 + dy, half, warped):
            acc = 0.0
            for i in range(win):
                for j in range(win):
                    acc += abs(patch[i + 1, j + 1] - warped[i, j])
            resid[k] = acc / (win * win)


def _window_inside(pts: np.ndarray, half: int, w: int, h: int) -> np.ndarray:
    x, y = pts[:, 0], pts[:, 1]
    return (x - half >= 0) & (x + half <= w - 1) & (y - half >= 0) & (y + half <= h - 1)


def lk_track(
    prev: Pyramid,
    next: Pyramid,
    points,
    window: int = WINDOW,
    max_iters: int = MAX_ITERS,
    eps: float = EPS,
    min_eig: float = MIN_EIG,
    max_residual: float = MAX_RESIDUAL,
) -> FlowResult:
    """Track ``points`` from ``prev`` to ``next`` coarse-to-fine.

    A point is reported lost when its window leaves the level-0 image (at the
    start or the end), when the level-0 structure tensor's smallest eigenvalue
    (normalised by window area and 255^2) is below ``min_eig``, or when the
    mean absolute window difference exceeds ``max_residual`` gray levels.
    Each point is solved independently with a fixed summation order, so the
    result does not depend on which other points are tracked alongside it.
    """
    if prev.depth != next.depth or any(a.shape != b.shape for a, b in zip(prev.levels, next.levels)):
        raise ValueError("prev and next pyramids differ in shape or depth")
    if window < 5 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 5, got {window}")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    if n == 0:
        return FlowResult(np.zeros((0, 2)), np.zeros(0, dtype=bool), np.zeros(0))

    half = window // 2
    h0, w0 = prev.shape
    guess = np.zeros((n, 2))
    disp = np.zeros((n, 2))
    status = np.isfinite(pts).all(axis=1) & _window_inside(pts, half, w0, h0)
    residual = np.full(n, np.inf)

    for level in range(prev.depth - 1, -1, -1):
        u = pts / 2.0**level
        disp = np.zeros((n, 2))
        ok = np.zeros(n, dtype=bool)
        resid = np.full(n, np.inf)
        _lk_level(_level(prev, level), _level(next, level), u, guess, status, half, int(max_iters),
                  float(eps), float(min_eig), disp, ok, resid, level == 0)
        if level > 0:
            guess = 2.0 * (guess + disp)
        else:
            status &= ok
            residual = resid

    final = pts + guess + disp
    status &= np.isfinite(final).all(axis=1)
    status &= _window_inside(np.where(np.isfinite(final), final, -1e9), half, w0, h0)
    status &= residual <= max_residual
    return FlowResult(final, status, residual)


def _level(pyr: Pyramid, level: int) -> np.ndarray:
    a = pyr.levels[level]
    if a.dtype != np.float64 or not a.flags.c_contiguous:
        a = np.ascontiguousarray(a, dtype=np.float64)
    return a


def median_displacement(points_prev, result: FlowResult, min_points: int = MIN_SURVIVORS):
    """Component-wise median motion of the tracked points, or ``None``."""
    prev = np.asarray(points_prev, dtype=np.float64).reshape(-1, 2)
    if len(prev) != len(result):
        raise ValueError("point list and flow result lengths differ")
    ok = result.status
    if int(ok.sum()) < min_points:
        return None
    # sort-based median: same values as np.median, far less per-call overhead
    s = np.sort(result.points_next[ok] - prev[ok], axis=0)
    k = len(s) // 2
    m = s[k] if len(s) % 2 else (s[k - 1] + s[k]) / 2.0
    return float(m[0]), float(m[1])
