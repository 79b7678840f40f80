"""Seedable image degradations: a JPEG quantization model and additive noise.

The JPEG model is the IJG baseline path without entropy coding:

1. level shift by -128, 8x8 orthonormal DCT per block (edges replicated to a
   multiple of 8, cropped back at the end);
2. quantize with the standard luminance table scaled by quality ``Q``:
   ``scale = 5000 / Q`` for ``Q < 50`` else ``200 - 2 Q``, entry
   ``floor((base * scale + 50) / 100)`` clamped to ``[1, 255]``;
   coefficients are rounded half away from zero;
3. dequantize, inverse DCT, undo the shift, clamp to ``[0, 255]`` and round
   half up.

Both roundings first snap values to 9 decimals so that exact ties (block sums
are multiples of 1/8) break as they would in exact arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.fft import dctn, idctn

from awm.patterns import NOISE_DOMAIN, check_seed, make_rng

LUMINANCE_TABLE = np.array(
    [
        [16, 11, 10, 16, 24, 40, 51, 61],
        [12, 12, 14, 19, 26, 58, 60, 55],
        [14, 13, 16, 24, 40, 57, 69, 56],
        [14, 17, 22, 29, 51, 87, 80, 62],
        [18, 22, 37, 56, 68, 109, 103, 77],
        [24, 35, 55, 64, 81, 104, 113, 92],
        [49, 64, 78, 87, 103, 121, 120, 101],
        [72, 92, 95, 98, 112, 100, 103, 99],
    ],
    dtype=np.int64,
)


@dataclass(frozen=True)
class JpegParams:
    quality: int

    def __post_init__(self):
        if not 1 <= int(self.quality) <= 100:
            raise ValueError(f"JPEG quality must be in 1..100, got {self.quality}")


@dataclass(frozen=True)
class NoiseParams:
    mean: float = 0.0
    std: float = 0.0
    seed: int = 0
    clamp: bool = False
    stream: int = 0

    def __post_init__(self):
        if not self.std >= 0:
            raise ValueError(f"noise std must be >= 0, got {self.std}")
        check_seed(self.seed)


def quant_table(quality: int) -> np.ndarray:
    JpegParams(quality)
    scale = 5000 // quality if quality < 50 else 200 - 2 * quality
    return np.clip((LUMINANCE_TABLE * scale + 50) // 100, 1, 255)


def _round_half_away(x: np.ndarray) -> np.ndarray:
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


def jpeg_attack(img: np.ndarray, p: JpegParams | int) -> np.ndarray:
    q = p.quality if isinstance(p, JpegParams) else JpegParams(int(p)).quality
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise ValueError(f"need a non-empty 2D image, got shape {img.shape}")
    h, w = img.shape
    ph, pw = -h % 8, -w % 8
    padded = np.pad(img, ((0, ph), (0, pw)), mode="edge") - 128.0
    H, W = padded.shape
    # (H/8, 8, W/8, 8) -> blocks on axes 1 and 3
    blocks = padded.reshape(H // 8, 8, W // 8, 8)
    coef = dctn(blocks, type=2, norm="ortho", axes=(1, 3))
    table = quant_table(q)[None, :, None, :].astype(np.float64)
    # snap float noise first so exact ties (the DC term is a multiple of 1/8)
    # round away from zero as they would in exact arithmetic
    coef = _round_half_away(np.round(coef / table, 9)) * table
    out = idctn(coef, type=2, norm="ortho", axes=(1, 3)).reshape(H, W) + 128.0
    return _round_half_away(np.round(np.clip(out[:h, :w], 0.0, 255.0), 9))


def gaussian_attack(img: np.ndarray, p: NoiseParams) -> np.ndarray:
    """Add i.i.d. ``N(mean, std)`` noise; unclamped unless ``p.clamp``.

    Draws fill the image in row-major order from the stream
    ``(seed, stream)``, so pixel ``(i, j)`` always receives draw ``i * W + j``.
    """
    img = np.asarray(img, dtype=np.float64)
    rng = make_rng(p.seed, NOISE_DOMAIN, p.stream)
    out = img + rng.normal(p.mean, p.std, size=img.shape)
    if p.clamp:
        out = np.clip(out, 0.0, 255.0)
    return out
