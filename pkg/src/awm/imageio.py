"""Grayscale image files: PGM (P5 binary, P2 ASCII) and a raw float format.

Attacked images may hold values outside [0, 255] or non-integers; those are
written as ``AWMIMGF``: the magic, H and W as little-endian uint32, then
row-major little-endian float64 pixels.
"""

from __future__ import annotations

import re
import struct
from os import PathLike
from pathlib import Path

import numpy as np

FLOAT_MAGIC = b"AWMIMGF"
IMAGE_SUFFIXES = (".pgm", ".awmf")


class ImageFormatError(ValueError):
    pass


def _pgm_tokens(data: bytes, count: int) -> tuple[list[bytes], int]:
    """First ``count`` whitespace-separated header tokens and the offset after them."""
    tokens: list[bytes] = []
    pos = 0
    token_re = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")
    while len(tokens) < count:
        m = token_re.match(data, pos)
        if m is None:
            raise ImageFormatError("truncated PGM header")
        tokens.append(m.group(1))
        pos = m.end()
    return tokens, pos


def parse_pgm(data: bytes) -> np.ndarray:
    tokens, pos = _pgm_tokens(data, 4)
    magic, w, h, maxval = tokens
    w, h, maxval = int(w), int(h), int(maxval)
    if w < 1 or h < 1 or not 0 < maxval < 65536:
        raise ImageFormatError(f"bad PGM header {w}x{h} maxval {maxval}")
    if magic == b"P5":
        pos += 1  # single whitespace byte ends the header
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype(np.uint8)
        need = w * h * dtype.itemsize
        raw = data[pos : pos + need]
        if len(raw) != need:
            raise ImageFormatError("truncated PGM raster")
        pixels = np.frombuffer(raw, dtype=dtype).reshape(h, w)
    elif magic == b"P2":
        body = re.sub(rb"#[^\n]*", b"", data[pos:]).split()
        if len(body) < w * h:
            raise ImageFormatError("truncated PGM raster")
        pixels = np.array([int(v) for v in body[: w * h]], dtype=np.int64).reshape(h, w)
    else:
        raise ImageFormatError(f"unsupported PGM magic {magic!r}")
    return pixels.astype(np.float64)


def format_pgm(img: np.ndarray, ascii: bool = False) -> bytes:
    """Encode an 8-bit image; pixels must already be integers in [0, 255]."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ImageFormatError("PGM holds a single 2D channel")
    if not np.all((img >= 0) & (img <= 255) & (img == np.round(img))):
        raise ImageFormatError("pixels outside 0..255 integers; use the float format")
    h, w = img.shape
    px = img.astype(np.uint8)
    if ascii:
        rows = "\n".join(" ".join(str(v) for v in row) for row in px)
        return f"P2\n{w} {h}\n255\n{rows}\n".encode()
    return f"P5\n{w} {h}\n255\n".encode() + px.tobytes()


def format_float(img: np.ndarray) -> bytes:
    img = np.asarray(img, dtype=np.float64)
    h, w = img.shape
    return FLOAT_MAGIC + struct.pack("<II", h, w) + img.astype("<f8").tobytes()


def parse_float(data: bytes) -> np.ndarray:
    if not data.startswith(FLOAT_MAGIC):
        raise ImageFormatError("not an AWMIMGF image")
    off = len(FLOAT_MAGIC)
    h, w = struct.unpack("<II", data[off : off + 8])
    raw = data[off + 8 : off + 8 + 8 * h * w]
    if len(raw) != 8 * h * w:
        raise ImageFormatError("truncated float image")
    return np.frombuffer(raw, dtype="<f8").reshape(h, w).astype(np.float64)


def read_image(path: str | PathLike) -> np.ndarray:
    """Load a grayscale image as a float64 ``H x W`` array (format sniffed)."""
    data = Path(path).read_bytes()
    if data.startswith(FLOAT_MAGIC):
        return parse_float(data)
    if data[:2] in (b"P5", b"P2"):
        return parse_pgm(data)
    raise ImageFormatError(f"{path}: unrecognized image format")


def write_image(path: str | PathLike, img: np.ndarray) -> None:
    """Write by suffix: ``.pgm`` (P5; must be 8-bit representable) or float."""
    path = Path(path)
    if path.suffix.lower() == ".pgm":
        path.write_bytes(format_pgm(img))
    else:
        path.write_bytes(format_float(img))


def list_corpus(directory: str | PathLike) -> list[Path]:
    """Image files in ``directory`` sorted by name."""
    d = Path(directory)
    if not d.is_dir():
        raise ImageFormatError(f"corpus directory {d} does not exist")
    files = sorted(p for p in d.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise ImageFormatError(f"no .pgm/.awmf images in {d}")
    return files
