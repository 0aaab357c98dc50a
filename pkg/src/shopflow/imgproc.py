"""Grayscale rasters, pyramids, gradients and Shi-Tomasi corners.

Images are plain 2-D ``numpy`` arrays (rows x columns). A *gray image* is
``uint8``; pyramid levels and gradient rasters are ``float64``. Pixel centers
sit on integer coordinates, so a point ``(x, y)`` addresses column ``x`` and
row ``y``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detect import BBox

# default corner seeding parameters (per detection box at 512x288)
MAX_CORNERS = 30
CORNER_QUALITY = 0.01
CORNER_MIN_DISTANCE = 3.0

# Scharr kernel normalised so a unit ramp yields a unit derivative
_SCHARR_SMOOTH = np.array([3.0, 10.0, 3.0]) / 16.0


def as_gray(img) -> np.ndarray:
    """Validate and return ``img`` as a read-only uint8 raster."""
    arr = np.asarray(img)
    if arr.ndim != 2:
        raise ValueError(f"gray image must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("gray image must be at least 1x1")
    if arr.dtype != np.uint8:
        if np.any(arr < 0) or np.any(arr > 255):
            raise ValueError("gray image samples must lie in [0, 255]")
        arr = arr.astype(np.uint8)
    arr = np.ascontiguousarray(arr)
    arr.flags.writeable = False
    return arr


def round_half_away(values: np.ndarray) -> np.ndarray:
    return np.sign(values) * np.floor(np.abs(values) + 0.5)


def to_luminance(rgb: np.ndarray) -> np.ndarray:
    """BT.601 luma of an RGB uint8 image, rounded to nearest."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[2] != 3:
        raise ValueError(f"color image must be HxWx3, got shape {rgb.shape}")
    y = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return as_gray(np.clip(round_half_away(y), 0, 255))


def _bilinear_axis(n_src: int, n_dst: int):
    """Half-pixel-centred taps as integers: position = i0 + num / den."""
    den = 2 * n_dst
    # position * den, clamped to the source range (edge replication)
    a = np.clip((2 * np.arange(n_dst, dtype=np.int64) + 1) * n_src - n_dst, 0, (n_src - 1) * den)
    i0 = (a // den).astype(np.intp)
    i1 = np.minimum(i0 + 1, n_src - 1)
    return i0, i1, a - i0 * den, den


def resize_bilinear(img: np.ndarray, target_w: int, target_h: int) -> np.ndarray:
    """Bilinear resample of a 2-D or HxWxC array to float64, any direction.

    Integer rasters are weighted in exact integer arithmetic and divided once,
    so exact halves stay exact for the rounding that usually follows.
    """
    src = np.asarray(img)
    exact = np.issubdtype(src.dtype, np.integer)
    src = src.astype(np.int64 if exact else np.float64)
    x0, x1, rx, dx = _bilinear_axis(src.shape[1], target_w)
    y0, y1, ry, dy = _bilinear_axis(src.shape[0], target_h)
    if exact:
        wx0, wx1, wy0, wy1 = dx - rx, rx, dy - ry, ry
    else:
        wx1, wy1 = rx / dx, ry / dy
        wx0, wy0 = 1 - wx1, 1 - wy1
    if src.ndim == 3:
        wx0, wx1 = wx0[:, None], wx1[:, None]
    top = src[y0][:, x0] * wx0 + src[y0][:, x1] * wx1
    bot = src[y1][:, x0] * wx0 + src[y1][:, x1] * wx1
    sh = (-1, 1, 1) if src.ndim == 3 else (-1, 1)
    out = top * wy0.reshape(sh) + bot * wy1.reshape(sh)
    return out / (dx * dy) if exact else out


def downscale(img, target_w: int, target_h: int) -> np.ndarray:
    """Shrink a gray (or HxWx3 color) image to exactly ``target_w`` x ``target_h``.

    Sampling is bilinear with half-pixel centres; results are rounded half away
    from zero. Upscaling is rejected.
    """
    arr = np.asarray(img)
    if target_w < 1 or target_h < 1:
        raise ValueError(f"target size must be positive, got {target_w}x{target_h}")
    h, w = arr.shape[:2]
    if target_w > w or target_h > h:
        raise ValueError(f"downscale cannot upscale {w}x{h} to {target_w}x{target_h}")
    if (target_w, target_h) == (w, h):
        return arr.astype(np.uint8, copy=True)
    out = np.clip(round_half_away(resize_bilinear(arr, target_w, target_h)), 0, 255)
    out = out.astype(np.uint8)
    return as_gray(out) if out.ndim == 2 else out


@dataclass(frozen=True)
class Pyramid:
    """Coarse-to-fine stack; ``levels[0]`` is full resolution."""

    levels: tuple

    @property
    def depth(self) -> int:
        return len(self.levels)

    @property
    def shape(self) -> tuple[int, int]:
        return self.levels[0].shape


def _decimate(level: np.ndarray) -> np.ndarray:
    h, w = level.shape
    nh, nw = max(1, h // 2), max(1, w // 2)
    if h >= 2 and w >= 2:
        b = level[:2 * nh, :2 * nw]
        return 0.25 * (b[0::2, 0::2] + b[1::2, 0::2] + b[0::2, 1::2] + b[1::2, 1::2])
    # replicate the last row/column when the source dimension is 1
    rows = np.minimum(np.arange(2 * nh), h - 1)
    cols = np.minimum(np.arange(2 * nw), w - 1)
    block = level[np.ix_(rows, cols)]
    return 0.25 * (block[0::2, 0::2] + block[1::2, 0::2] + block[0::2, 1::2] + block[1::2, 1::2])


def build_pyramid(img, levels: int) -> Pyramid:
    arr = np.asarray(img)
    if levels < 1:
        raise ValueError("pyramid needs at least one level")
    if 2 ** (levels - 1) > min(arr.shape[:2]):
        raise ValueError(
            f"{levels} levels would shrink a {arr.shape[1]}x{arr.shape[0]} image below 1 pixel"
        )
    out = [arr.astype(np.float64)]
    for _ in range(levels - 1):
        out.append(_decimate(out[-1]))
    for lv in out:
        lv.flags.writeable = False
    return Pyramid(tuple(out))


def gradients(img) -> tuple[np.ndarray, np.ndarray]:
    """Scharr derivatives (intensity units per pixel) with edge replication."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[0] < 3 or arr.shape[1] < 3:
        raise ValueError(f"gradients need an image of at least 3x3, got shape {arr.shape}")
    p = np.pad(arr, 1, mode="edge")
    a, b, c = _SCHARR_SMOOTH
    dx = 0.5 * (p[:, 2:] - p[:, :-2])
    dy = 0.5 * (p[2:, :] - p[:-2, :])
    ix = a * dx[:-2, :] + b * dx[1:-1, :] + c * dx[2:, :]
    iy = a * dy[:, :-2] + b * dy[:, 1:-1] + c * dy[:, 2:]
    return ix, iy


def box_sum3(a: np.ndarray) -> np.ndarray:
    p = np.pad(a, 1, mode="edge")
    rows = p[:-2] + p[1:-1] + p[2:]
    return rows[:, :-2] + rows[:, 1:-1] + rows[:, 2:]


def min_eigen_map(img) -> np.ndarray:
    """Smaller eigenvalue of the 3x3-summed structure tensor at every pixel."""
    ix, iy = gradients(img)
    sxx = box_sum3(ix * ix)
    syy = box_sum3(iy * iy)
    sxy = box_sum3(ix * iy)
    half_tr = 0.5 * (sxx + syy)
    disc = np.sqrt(np.maximum(0.25 * (sxx - syy) ** 2 + sxy**2, 0.0))
    return np.maximum(half_tr - disc, 0.0)


def roi_pixel_span(roi: BBox, width: int, height: int):
    """Integer pixel ranges strictly inside ``roi`` intersected with the image.

    Returns ``(x_lo, x_hi, y_lo, y_hi)`` as half-open ranges, or ``None`` when
    the intersection contains no pixel centre.
    """
    lo_x, hi_x = max(roi.x, 0.0), min(roi.x + roi.w, width - 1.0)
    lo_y, hi_y = max(roi.y, 0.0), min(roi.y + roi.h, height - 1.0)
    x_lo, x_hi = int(np.floor(lo_x)) + 1, int(np.ceil(hi_x))
    y_lo, y_hi = int(np.floor(lo_y)) + 1, int(np.ceil(hi_y))
    if x_lo >= x_hi or y_lo >= y_hi:
        return None
    return x_lo, x_hi, y_lo, y_hi


def shi_tomasi_corners(
    img,
    roi: BBox,
    max_corners: int = MAX_CORNERS,
    quality: float = CORNER_QUALITY,
    min_distance: float = CORNER_MIN_DISTANCE,
    eig: np.ndarray | None = None,
) -> list[tuple[float, float]]:
    """Strongest min-eigenvalue corners inside ``roi``.

    Candidates are ranked by score (descending, ties row-major), filtered by
    ``quality`` relative to the best score in the roi, and thinned greedily so
    no two survivors are closer than ``min_distance``. A precomputed
    full-image :func:`min_eigen_map` may be passed as ``eig``; otherwise the
    map is computed on a crop around the roi, which gives identical scores.
    """
    arr = np.asarray(img)
    if max_corners < 1:
        raise ValueError("max_corners must be >= 1")
    if not 0.0 < quality < 1.0:
        raise ValueError("quality must lie in (0, 1)")
    span = roi_pixel_span(roi, arr.shape[1], arr.shape[0])
    if span is None:
        raise ValueError(f"roi {roi} does not intersect the {arr.shape[1]}x{arr.shape[0]} image")
    x_lo, x_hi, y_lo, y_hi = span
    if eig is None:
        # gradients reach 1 px and the 3x3 sum another 1 px; cropping at the image
        # border keeps the same edge replication as the full map
        cy0, cx0 = max(y_lo - 2, 0), max(x_lo - 2, 0)
        crop = min_eigen_map(arr[cy0:min(y_hi + 2, arr.shape[0]), cx0:min(x_hi + 2, arr.shape[1])])
        scores = crop[y_lo - cy0:y_hi - cy0, x_lo - cx0:x_hi - cx0]
    else:
        scores = eig[y_lo:y_hi, x_lo:x_hi]
    best = float(scores.max())
    if best <= 1e-9:
        return []
    flat = scores.ravel()
    keep = np.flatnonzero(flat >= quality * best)
    # stable sort on -score keeps row-major order among ties
    keep = keep[np.argsort(-flat[keep], kind="stable")]
    nrows, ncols = y_hi - y_lo, x_hi - x_lo
    # pixels closer than min_distance to an accepted corner are blocked
    r = int(np.ceil(min_distance)) - 1 if min_distance > 0 else -1
    offs = [
        (dy, dx)
        for dy in range(-r, r + 1)
        for dx in range(-r, r + 1)
        if dx * dx + dy * dy < min_distance * min_distance
    ]
    blocked = np.zeros((nrows, ncols), dtype=bool)
    chosen: list[tuple[float, float]] = []
    for k in keep:
        y, x = divmod(int(k), ncols)
        if blocked[y, x]:
            continue
        chosen.append((float(x + x_lo), float(y + y_lo)))
        if len(chosen) == max_corners:
            break
        for dy, dx in offs:
            yy, xx = y + dy, x + dx
            if 0 <= yy < nrows and 0 <= xx < ncols:
                blocked[yy, xx] = True
    return chosen
