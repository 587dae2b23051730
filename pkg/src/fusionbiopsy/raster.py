"""Grayscale raster I/O: 8/16-bit PGM (P2/P5) and grayscale PNG."""

from __future__ import annotations

import re
from pathlib import Path

import numpy as np
from PIL import Image

from .core import GrayImage


class RasterError(Exception):
    pass


def _read_pgm(path: Path) -> np.ndarray:
    data = path.read_bytes()
    if data[:2] not in (b"P2", b"P5"):
        raise RasterError(f"{path}: not a PGM file")
    magic = data[:2].decode()
    # Header tokens: width, height, maxval; '#' comments run to end of line.
    pos = 2
    tokens = []
    while len(tokens) < 3:
        m = re.compile(rb"\s*(#[^\n]*\n|\S+)").match(data, pos)
        if m is None:
            raise RasterError(f"{path}: truncated PGM header")
        pos = m.end()
        tok = m.group(1)
        if not tok.startswith(b"#"):
            tokens.append(tok)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError:
        raise RasterError(f"{path}: malformed PGM header") from None
    if width < 1 or height < 1 or not (0 < maxval < 65536):
        raise RasterError(f"{path}: invalid PGM dimensions or maxval")
    if magic == "P2":
        values = np.array(data[pos:].split(), dtype=np.float64)
        if values.size != width * height:
            raise RasterError(f"{path}: PGM pixel count mismatch")
        return values.reshape(height, width)
    pos += 1  # single whitespace after maxval
    dtype = np.dtype(">u2") if maxval > 255 else np.uint8
    raw = np.frombuffer(data, dtype=dtype, count=width * height, offset=pos)
    return raw.reshape(height, width).astype(np.float64)


def read_image(path) -> GrayImage:
    """Read a PGM or grayscale PNG as raw (unnormalized) intensities."""
    path = Path(path)
    if not path.is_file():
        raise RasterError(f"image not found: {path}")
    if path.suffix.lower() == ".pgm":
        return GrayImage(_read_pgm(path))
    with Image.open(path) as im:
        if im.mode not in ("L", "I", "I;16", "I;16B"):
            im = im.convert("L")
        arr = np.asarray(im, dtype=np.float64)
    if arr.ndim != 2:
        raise RasterError(f"{path}: not a grayscale image")
    return GrayImage(arr)


def write_pgm(path, img: GrayImage, maxval: int = 65535) -> None:
    """Write binary PGM; normalized images are scaled to maxval, raw images
    are rounded and clipped."""
    arr = img.pixels
    if img.normalized:
        arr = arr * maxval
    q = np.clip(np.rint(arr), 0, maxval)
    dtype = np.dtype(">u2") if maxval > 255 else np.uint8
    header = f"P5\n{img.width} {img.height}\n{maxval}\n".encode()
    Path(path).write_bytes(header + q.astype(dtype).tobytes())


def write_png(path, img: GrayImage) -> None:
    arr = img.pixels * 65535.0 if img.normalized else img.pixels
    q = np.clip(np.rint(arr), 0, 65535).astype(np.uint16)
    Image.fromarray(q).save(path)
