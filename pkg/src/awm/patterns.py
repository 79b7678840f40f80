"""Bipolar (+1/-1) patterns: seeded generation, degradation, overlaps.

Vectors are plain numpy ``int8`` arrays marked read-only.  Every function
that hands out a vector goes through :func:`as_bipolar`, which validates the
values and freezes the buffer, so a vector that reached user code is never
mutated behind its back.

Randomness comes from numpy's Philox-4x64 counter-based generator, keyed by
``SeedSequence(seed, spawn_key=(domain, *stream))``.  The domain tag keeps
pattern draws, degradation draws and image noise on disjoint streams even if
callers reuse the same stream index.
"""

from __future__ import annotations

import struct
from os import PathLike
from typing import BinaryIO, Iterable, Sequence

import numpy as np

PATTERN_DOMAIN = 0
DEGRADE_DOMAIN = 1
NOISE_DOMAIN = 2
EXPERIMENT_DOMAIN = 3

_MAX_SEED = 2**64 - 1

PATTERN_MAGIC = b"AWMPAT1"


class PatternError(ValueError):
    """Invalid pattern length, value or domain."""


class DimensionError(PatternError):
    """Two vectors (or a vector and a matrix) disagree in length."""


def check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= _MAX_SEED:
        raise PatternError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def make_rng(seed: int, domain: int, *stream: int) -> np.random.Generator:
    """Philox generator for the stream ``(domain, *stream)`` under ``seed``."""
    key = (int(domain),) + tuple(int(s) for s in stream)
    if any(k < 0 for k in key):
        raise PatternError(f"stream indices must be non-negative, got {key}")
    ss = np.random.SeedSequence(check_seed(seed), spawn_key=key)
    return np.random.Generator(np.random.Philox(ss))


def as_bipolar(values: Iterable[int] | np.ndarray) -> np.ndarray:
    """Validate ``values`` as a +1/-1 vector and return a frozen int8 copy."""
    arr = np.array(values, dtype=np.int64, copy=True).reshape(-1)
    if arr.size == 0:
        raise PatternError("bipolar vector must have length >= 1")
    if not np.all(np.abs(arr) == 1):
        raise PatternError("bipolar vector entries must be exactly +1 or -1")
    out = arr.astype(np.int8)
    out.flags.writeable = False
    return out


def sgn(h: np.ndarray) -> np.ndarray:
    """Sign with the ``sgn(0) = +1`` convention, as a frozen int8 array."""
    out = np.where(np.asarray(h) >= 0, 1, -1).astype(np.int8)
    out.flags.writeable = False
    return out


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr.flags.writeable = False
    return arr


def random_bipolar(n: int, seed: int, stream: int = 0) -> np.ndarray:
    """Unbiased random +1/-1 vector of length ``n``.

    Deterministic for a fixed ``(seed, stream, n)``.
    """
    if n < 1:
        raise PatternError(f"length must be >= 1, got {n}")
    rng = make_rng(seed, PATTERN_DOMAIN, stream)
    bits = rng.integers(0, 2, size=n, dtype=np.int8)
    return _freeze((2 * bits - 1).astype(np.int8))


def random_patterns(count: int, n: int, rng: np.random.Generator) -> np.ndarray:
    """``count`` x ``n`` matrix of unbiased bipolar rows drawn from ``rng``."""
    if count < 1 or n < 1:
        raise PatternError(f"need count >= 1 and n >= 1, got {count}, {n}")
    bits = rng.integers(0, 2, size=(count, n), dtype=np.int8)
    return _freeze((2 * bits - 1).astype(np.int8))


def overlap(a: np.ndarray, b: np.ndarray) -> float:
    """Normalized inner product ``(1/n) sum a_i b_i``."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"overlap needs equal-length vectors, got {a.shape} and {b.shape}")
    return int(np.dot(a.astype(np.int64), b.astype(np.int64))) / a.size


def flip_count(n: int, target: float) -> int:
    """Number of flips that brings a length-``n`` vector closest to ``target``.

    ``round(n (1 - target) / 2)`` with round-half-to-even.
    """
    if not -1.0 <= target <= 1.0:
        raise PatternError(f"target overlap must lie in [-1, 1], got {target}")
    return int(round(n * (1.0 - target) / 2.0))


def achieved_overlap(n: int, target: float) -> float:
    """The overlap :func:`degrade_to_overlap` actually produces at length ``n``."""
    return (n - 2 * flip_count(n, target)) / n


def degrade_to_overlap(v: np.ndarray, target: float, seed: int, stream: int = 0) -> np.ndarray:
    """Flip ``flip_count(len(v), target)`` uniformly chosen positions of ``v``.

    The achieved overlap is ``achieved_overlap(len(v), target)``; targets not
    representable at this length are quantized to the nearest one.
    """
    v = np.asarray(v)
    f = flip_count(v.size, target)
    rng = make_rng(seed, DEGRADE_DOMAIN, stream)
    out = v.astype(np.int8, copy=True)
    if f:
        idx = rng.choice(v.size, size=f, replace=False)
        out[idx] = -out[idx]
    return _freeze(out)


def flip_positions(v: np.ndarray, positions: Sequence[int]) -> np.ndarray:
    out = np.asarray(v).astype(np.int8, copy=True)
    idx = np.asarray(positions, dtype=np.int64)
    out[idx] = -out[idx]
    return _freeze(out)


def ber_from_overlap(m: float) -> float:
    """Bit error rate ``(1 - m) / 2``."""
    if not -1.0 <= m <= 1.0:
        raise PatternError(f"overlap must lie in [-1, 1], got {m}")
    return (1.0 - m) / 2.0


def bit_error_rate(a: np.ndarray, b: np.ndarray) -> float:
    """Fraction of mismatching positions, computed from the integer count."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise DimensionError(f"BER needs equal-length vectors, got {a.shape} and {b.shape}")
    return int(np.count_nonzero(a != b)) / a.size


# --- bit-packed representation --------------------------------------------
#
# bit = 1 <-> +1, MSB-first within each byte (numpy.packbits default), rows
# padded with zero bits to a byte boundary.


def pack(v: np.ndarray) -> np.ndarray:
    """Pack a bipolar vector (or matrix of row vectors) into bytes."""
    v = np.asarray(v)
    return np.packbits(v > 0, axis=-1)


def unpack(packed: np.ndarray, n: int) -> np.ndarray:
    bits = np.unpackbits(np.asarray(packed, dtype=np.uint8), axis=-1, count=n)
    return _freeze((2 * bits.astype(np.int8) - 1).astype(np.int8))


def packed_overlap(pa: np.ndarray, pb: np.ndarray, n: int) -> float:
    """Overlap of two packed vectors of logical length ``n``.

    Counts mismatching bits with a popcount over the XOR; padding bits are
    zero in both operands and never contribute.
    """
    pa = np.asarray(pa, dtype=np.uint8)
    pb = np.asarray(pb, dtype=np.uint8)
    if pa.shape != pb.shape:
        raise DimensionError(f"packed shapes differ: {pa.shape} vs {pb.shape}")
    mismatches = int(np.bitwise_count(pa ^ pb).sum())
    return (n - 2 * mismatches) / n


def write_patterns(fh: BinaryIO, rows: np.ndarray) -> None:
    """Serialize a pattern matrix in the ``AWMPAT1`` format.

    Header: magic, n (uint32 LE), count (uint32 LE); then ``count`` packed
    rows of ``ceil(n / 8)`` bytes each.
    """
    rows = np.atleast_2d(np.asarray(rows))
    count, n = rows.shape
    if not np.all(np.abs(rows) == 1):
        raise PatternError("pattern rows must be bipolar")
    fh.write(PATTERN_MAGIC)
    fh.write(struct.pack("<II", n, count))
    fh.write(pack(rows).tobytes())


def read_patterns(fh: BinaryIO) -> np.ndarray:
    magic = fh.read(len(PATTERN_MAGIC))
    if magic != PATTERN_MAGIC:
        raise PatternError(f"not an AWMPAT1 stream (magic {magic!r})")
    n, count = struct.unpack("<II", fh.read(8))
    width = (n + 7) // 8
    raw = fh.read(width * count)
    if len(raw) != width * count:
        raise PatternError("truncated pattern file")
    packed = np.frombuffer(raw, dtype=np.uint8).reshape(count, width)
    return unpack(packed, n)


def save_patterns(path: str | PathLike, rows: np.ndarray) -> None:
    with open(path, "wb") as fh:
        write_patterns(fh, rows)


def load_patterns(path: str | PathLike) -> np.ndarray:
    with open(path, "rb") as fh:
        return read_patterns(fh)
