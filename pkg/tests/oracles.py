"""Independent reference implementations used as test oracles.

Each one is written the slow, obvious way (scalar loops, exact fractions)
and shares no code with the package.
"""

from fractions import Fraction
import math


def bilinear_sample(img, x, y):
    """Bilinear value at (x, y) with coordinates clamped to the image."""
    h, w = len(img), len(img[0])
    x = min(max(x, 0.0), w - 1.0)
    y = min(max(y, 0.0), h - 1.0)
    x0, y0 = int(math.floor(x)), int(math.floor(y))
    x1, y1 = min(x0 + 1, w - 1), min(y0 + 1, h - 1)
    fx, fy = x - x0, y - y0
    top = img[y0][x0] * (1 - fx) + img[y0][x1] * fx
    bot = img[y1][x0] * (1 - fx) + img[y1][x1] * fx
    return top * (1 - fy) + bot * fy


def resize_reference(img, tw, th):
    """Half-pixel-centred bilinear resize in exact fractions, rounded half away from zero."""
    h, w = len(img), len(img[0])
    img = [[Fraction(v) for v in row] for row in img]
    out = []
    for j in range(th):
        row = []
        for i in range(tw):
            sx = (i + Fraction(1, 2)) * w / tw - Fraction(1, 2)
            sy = (j + Fraction(1, 2)) * h / th - Fraction(1, 2)
            v = bilinear_sample(img, sx, sy)
            row.append(int(math.floor(v + Fraction(1, 2))))
        out.append(row)
    return out


def _px(img, x, y):
    h, w = len(img), len(img[0])
    return float(img[min(max(y, 0), h - 1)][min(max(x, 0), w - 1)])


def scharr_reference(img):
    """Scharr derivatives by the textbook 3x3 kernels / 32, edge replicated."""
    h, w = len(img), len(img[0])
    kx = [[-3, 0, 3], [-10, 0, 10], [-3, 0, 3]]
    gx = [[0.0] * w for _ in range(h)]
    gy = [[0.0] * w for _ in range(h)]
    for y in range(h):
        for x in range(w):
            sx = sy = 0.0
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    v = _px(img, x + dx, y + dy)
                    sx += kx[dy + 1][dx + 1] * v
                    sy += kx[dx + 1][dy + 1] * v
            gx[y][x] = sx / 32.0
            gy[y][x] = sy / 32.0
    return gx, gy


def min_eigen_reference(img):
    """Smaller structure-tensor eigenvalue over a 3x3 window, by brute force."""
    gx, gy = scharr_reference(img)
    h, w = len(img), len(img[0])
    out = [[0.0] * w for _ in range(h)]
    for y in range(h):
        for x in range(w):
            a = b = c = 0.0
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    yy, xx = min(max(y + dy, 0), h - 1), min(max(x + dx, 0), w - 1)
                    a += gx[yy][xx] ** 2
                    b += gx[yy][xx] * gy[yy][xx]
                    c += gy[yy][xx] ** 2
            out[y][x] = max(0.0, (a + c) / 2 - math.sqrt(((a - c) / 2) ** 2 + b * b))
    return out


def iou_exact(a, b):
    """IoU of integer/fraction boxes (x, y, w, h) as a Fraction."""
    ax, ay, aw, ah = (Fraction(v) for v in a)
    bx, by, bw, bh = (Fraction(v) for v in b)
    iw = min(ax + aw, bx + bw) - max(ax, bx)
    ih = min(ay + ah, by + bh) - max(ay, by)
    if iw <= 0 or ih <= 0:
        return Fraction(0)
    inter = iw * ih
    return inter / (aw * ah + bw * bh - inter)


def pr_reference(preds, truth, iou_min):
    """Exhaustive PR trace and exact all-points AP.

    ``preds`` is a list of (frame, index, (x, y, w, h), confidence); ``truth``
    maps frame to a list of boxes. For each prediction in ranked order every
    ground-truth box of the frame is examined and the unmatched one with the
    largest exact IoU (first index on ties) at or above ``iou_min`` is taken.
    Returns (tp flags, AP as Fraction).
    """
    ranked = sorted(preds, key=lambda p: (-p[3], p[0], p[1]))
    used = set()
    flags = []
    thr = Fraction(iou_min)
    for f, _, box, _ in ranked:
        best, best_j = None, None
        for j, g in enumerate(truth.get(f, [])):
            if (f, j) in used:
                continue
            o = iou_exact(box, g)
            if o >= thr and (best is None or o > best):
                best, best_j = o, j
        if best_j is not None:
            used.add((f, best_j))
        flags.append(best_j is not None)
    n_truth = sum(len(v) for v in truth.values())
    if n_truth == 0:
        return flags, Fraction(0)
    tp = 0
    area = Fraction(0)
    for k, hit in enumerate(flags, start=1):
        if hit:
            tp += 1
            # recall rises by 1/n_truth at this rank with precision tp/k
            area += Fraction(tp, k) / n_truth
    return flags, area


def tent_weight(px, py, box):
    x, y, w, h = box
    cx, cy = x + w / 2.0, y + h / 2.0
    return max(0.0, 1 - abs(2 * (px - cx) / w)) * max(0.0, 1 - abs(2 * (py - cy) / h))
