"""Minimal binary PGM (P5) / PPM (P6) reader and writer, 8 or 16 bit."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import FormatError

__all__ = ["read_pnm", "read_gray", "write_pgm", "write_ppm", "to_gray", "rescale_to_u8"]

_LUMA = np.array([0.299, 0.587, 0.114])


def _tokens(data: bytes, count: int):
    """Return ``count`` header tokens and the offset of the raster."""
    out = []
    i = 0
    n = len(data)
    while len(out) < count:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        start = i
        while i < n and not data[i : i + 1].isspace() and data[i : i + 1] != b"#":
            i += 1
        if start == i:
            raise FormatError("truncated header", offset=i)
        out.append(data[start:i])
    # exactly one whitespace byte separates maxval from the raster
    return out, i + 1


def read_pnm(path) -> np.ndarray:
    """Read a P5/P6 file into ``(H, W)`` or ``(H, W, 3)`` unsigned integers."""
    data = Path(path).read_bytes()
    toks, offset = _tokens(data, 4)
    magic = toks[0]
    if magic not in (b"P5", b"P6"):
        raise FormatError(f"unsupported magic {magic!r}", offset=0)
    try:
        width, height, maxval = (int(t) for t in toks[1:])
    except ValueError:
        raise FormatError("non-integer header field", offset=offset) from None
    if not 0 < maxval < 65536 or width < 1 or height < 1:
        raise FormatError("invalid header values", offset=offset)
    channels = 3 if magic == b"P6" else 1
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * channels * dtype.itemsize
    raster = data[offset : offset + need]
    if len(raster) < need:
        raise FormatError(f"raster truncated: need {need} bytes, have {len(raster)}", offset=offset)
    arr = np.frombuffer(raster, dtype=dtype).astype(np.uint16 if maxval > 255 else np.uint8)
    shape = (height, width, 3) if channels == 3 else (height, width)
    return arr.reshape(shape)


def to_gray(img) -> np.ndarray:
    """BT.601 luma for color input; grayscale passes through as float."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 3:
        return img @ _LUMA
    return img


def read_gray(path) -> np.ndarray:
    """Read PGM/PPM and return float64 gray levels (color converted to luma)."""
    return to_gray(read_pnm(path))


def _write(path, magic, arr, maxval):
    arr = np.asarray(arr)
    if maxval is None:
        maxval = 255 if arr.dtype == np.uint8 or arr.max(initial=0) <= 255 else 65535
    if maxval > 255:
        raster = np.clip(arr, 0, maxval).astype(">u2").tobytes()
    else:
        raster = np.clip(arr, 0, maxval).astype(np.uint8).tobytes()
    h, w = arr.shape[:2]
    Path(path).write_bytes(f"{magic}\n{w} {h}\n{maxval}\n".encode("ascii") + raster)


def write_pgm(path, img, maxval=None) -> None:
    img = np.asarray(img)
    if img.ndim != 2:
        raise ValueError("PGM needs a 2-D array")
    _write(path, "P5", img, maxval)


def write_ppm(path, img, maxval=None) -> None:
    img = np.asarray(img)
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError("PPM needs an (H, W, 3) array")
    _write(path, "P6", img, maxval)


def rescale_to_u8(arr) -> np.ndarray:
    """Affine map of ``arr`` onto ``[0, 255]`` for viewing (constant maps to 0)."""
    arr = np.asarray(arr, dtype=np.float64)
    lo, hi = float(arr.min()), float(arr.max())
    if hi <= lo:
        return np.zeros(arr.shape, dtype=np.uint8)
    return np.round((arr - lo) * (255.0 / (hi - lo))).astype(np.uint8)
