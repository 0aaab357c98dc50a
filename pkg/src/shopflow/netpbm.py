"""Binary Netpbm (P5 gray / P6 color, 8-bit) frame I/O."""

from __future__ import annotations

import os
import re
from pathlib import Path

import numpy as np

from .imgproc import to_luminance

_FRAME_RE = re.compile(r"^frame_(\d{6})\.(pgm|ppm)$")


class NetpbmError(ValueError):
    pass


def _tokens(buf: bytes, count: int, path):
    # header tokens separated by whitespace, '#' comments run to end of line
    out, pos = [], 0
    n = len(buf)
    while len(out) < count:
        while pos < n and buf[pos:pos + 1].isspace():
            pos += 1
        if pos < n and buf[pos:pos + 1] == b"#":
            while pos < n and buf[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not buf[pos:pos + 1].isspace() and buf[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise NetpbmError(f"{path}: truncated header")
        out.append(buf[start:pos])
    # exactly one whitespace byte separates the header from the raster
    return out, pos + 1


def read_netpbm(path) -> np.ndarray:
    """Read a P5 (HxW) or P6 (HxWx3) file with maxval 255."""
    buf = Path(path).read_bytes()
    toks, pos = _tokens(buf, 4, path)
    magic = toks[0]
    if magic not in (b"P5", b"P6"):
        raise NetpbmError(f"{path}: unsupported magic {magic!r} (need P5 or P6)")
    try:
        w, h, maxval = (int(t) for t in toks[1:])
    except ValueError:
        raise NetpbmError(f"{path}: malformed header") from None
    if w < 1 or h < 1:
        raise NetpbmError(f"{path}: bad dimensions {w}x{h}")
    if maxval != 255:
        raise NetpbmError(f"{path}: only maxval 255 is supported, got {maxval}")
    ch = 3 if magic == b"P6" else 1
    need = w * h * ch
    data = buf[pos:pos + need]
    if len(data) != need:
        raise NetpbmError(f"{path}: expected {need} raster bytes, found {len(data)}")
    arr = np.frombuffer(data, dtype=np.uint8)
    return arr.reshape(h, w, 3).copy() if ch == 3 else arr.reshape(h, w).copy()


def write_netpbm(path, img: np.ndarray) -> None:
    """Write a 2-D array as P5 or an HxWx3 array as P6."""
    img = np.asarray(img)
    if img.dtype != np.uint8:
        raise ValueError(f"expected uint8 image, got {img.dtype}")
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    else:
        raise ValueError(f"cannot write shape {img.shape} as Netpbm")
    h, w = img.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(np.ascontiguousarray(img).tobytes())


def read_gray(path) -> np.ndarray:
    img = read_netpbm(path)
    return to_luminance(img) if img.ndim == 3 else img


def list_frames(directory) -> list[tuple[int, Path]]:
    """``frame_%06d.pgm``/``.ppm`` files in index order; indices must be contiguous from 0."""
    d = Path(directory)
    if not d.is_dir():
        raise FileNotFoundError(f"frame directory not found: {d}")
    found = {}
    for name in os.listdir(d):
        m = _FRAME_RE.match(name)
        if m is None:
            continue
        i = int(m.group(1))
        if i in found:
            raise NetpbmError(f"{d}: frame {i} present as both .pgm and .ppm")
        found[i] = d / name
    idx = sorted(found)
    if idx != list(range(len(idx))):
        missing = next(i for i in range(len(idx) + 1) if i not in found)
        raise NetpbmError(f"{d}: frame sequence has a gap at index {missing}")
    return [(i, found[i]) for i in idx]


def directory_source(directory, limit: int | None = None):
    """Yield ``(index, image)`` for a frame directory; color frames keep their RGB."""
    for i, p in list_frames(directory)[:limit]:
        yield i, read_netpbm(p)


def write_frames(directory, frames, color: bool = False) -> int:
    """Dump ``(index, image)`` pairs as ``frame_%06d`` files; returns the count."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    n = 0
    for i, img in frames:
        img = np.asarray(img)
        if color and img.ndim == 2:
            img = np.repeat(img[..., None], 3, axis=2)
        ext = "ppm" if img.ndim == 3 else "pgm"
        write_netpbm(d / f"frame_{i:06d}.{ext}", img)
        n += 1
    return n
