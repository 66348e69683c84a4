"""Minimal Netpbm reader/writer (P2, P3, P5, P6).

Images are float arrays in [0, 1]: ``(h, w)`` for graymaps, ``(h, w, 3)``
for pixmaps. Writers quantise to 8 bits.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ValidationError


def _tokens(data: bytes, count: int, pos: int = 0):
    """Read ``count`` whitespace-separated header tokens, skipping comments."""
    out = []
    n = len(data)
    while len(out) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ValidationError("truncated Netpbm header")
        out.append(data[start:pos])
    return out, pos


def read_pnm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    (magic, w, h, maxval), pos = _tokens(data, 4)
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise ValidationError(f"{path}: unsupported Netpbm magic {magic!r}")
    w, h, maxval = int(w), int(h), int(maxval)
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise ValidationError(f"{path}: invalid header {w}x{h} maxval {maxval}")
    channels = 3 if magic in (b"P3", b"P6") else 1
    count = w * h * channels
    if magic in (b"P5", b"P6"):
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[pos + 1:pos + 1 + count * dtype.itemsize]
        if len(raw) != count * dtype.itemsize:
            raise ValidationError(f"{path}: pixel data truncated")
        values = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    else:
        values = np.array(data[pos:].split()[:count], dtype=np.float64)
        if values.size != count:
            raise ValidationError(f"{path}: pixel data truncated")
    img = values.reshape(h, w, channels) / maxval
    return img[:, :, 0] if channels == 1 else img


def to_bytes(image) -> np.ndarray:
    img = np.asarray(image, dtype=np.float64)
    return np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)


def quantize(image) -> np.ndarray:
    """Round-trip through 8 bits so in-memory images match what is on disk."""
    return to_bytes(image).astype(np.float64) / 255.0


def write_pnm(path, image) -> Path:
    path = Path(path)
    img = to_bytes(image)
    if img.ndim == 2:
        magic = b"P5"
    elif img.ndim == 3 and img.shape[2] == 3:
        magic = b"P6"
    elif img.ndim == 3 and img.shape[2] == 1:
        img, magic = img[:, :, 0], b"P5"
    else:
        raise ValidationError(f"cannot write image of shape {img.shape}")
    h, w = img.shape[:2]
    path.write_bytes(magic + b"\n%d %d\n255\n" % (w, h) + img.tobytes())
    return path


def write_label_pgm(path, labels) -> Path:
    """Region ids as raw gray values (16-bit when there are more than 256)."""
    path = Path(path)
    lab = np.asarray(labels)
    if lab.ndim != 2 or lab.min(initial=0) < 0:
        raise ValidationError("labels must be a 2-d array of nonnegative ids")
    top = int(lab.max(initial=0))
    if top > 65535:
        raise ValidationError("too many regions for a PGM label map")
    maxval = 255 if top <= 255 else 65535
    data = lab.astype(np.uint8 if maxval == 255 else ">u2").tobytes()
    h, w = lab.shape
    path.write_bytes(b"P5\n%d %d\n%d\n" % (w, h, maxval) + data)
    return path
