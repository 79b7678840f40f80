"""DCT sign features, the zero-watermarking baseline and the AWM image pipeline."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.fft import dctn, idctn

from awm.memory import (
    DEFAULT_T_MAX,
    AutoWeights,
    HeteroWeights,
    PatternStore,
    RecallTrace,
    awm_recall,
    train_auto,
    train_hetero,
)
from awm.patterns import DimensionError, as_bipolar, sgn


class FeatureError(ValueError):
    pass


def dct2d(img: np.ndarray) -> np.ndarray:
    """Orthonormal type-II 2D DCT (rows, then columns)."""
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2 or img.size == 0:
        raise FeatureError(f"need a non-empty 2D image, got shape {img.shape}")
    return dctn(img, type=2, norm="ortho")


def idct2d(coef: np.ndarray) -> np.ndarray:
    coef = np.asarray(coef, dtype=np.float64)
    if coef.ndim != 2 or coef.size == 0:
        raise FeatureError(f"need a non-empty 2D array, got shape {coef.shape}")
    return idctn(coef, type=2, norm="ortho")


def zigzag_indices(h: int, w: int, count: int | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Row and column indices of the JPEG zigzag scan over an ``h x w`` grid.

    Anti-diagonal ``s = i + j`` is walked with ``i`` increasing for odd ``s``
    and decreasing for even ``s``: (0,0), (0,1), (1,0), (2,0), (1,1), (0,2)...
    Only the first ``count`` positions are generated.
    """
    total = h * w if count is None else min(count, h * w)
    rows = np.empty(total, dtype=np.int64)
    cols = np.empty(total, dtype=np.int64)
    k = 0
    s = 0
    while k < total:
        i_lo = max(0, s - (w - 1))
        i_hi = min(s, h - 1)
        i = np.arange(i_lo, i_hi + 1)
        if s % 2 == 0:
            i = i[::-1]
        take = min(i.size, total - k)
        rows[k : k + take] = i[:take]
        cols[k : k + take] = s - i[:take]
        k += take
        s += 1
    return rows, cols


@dataclass(frozen=True)
class FeatureVector:
    coefficients: np.ndarray
    signs: np.ndarray

    def __len__(self) -> int:
        return self.signs.size


def extract_features(img: np.ndarray, K: int) -> FeatureVector:
    """First ``K`` zigzag DCT coefficients after DC, and their signs."""
    img = np.asarray(img, dtype=np.float64)
    if K < 1:
        raise FeatureError(f"K must be >= 1, got {K}")
    if img.ndim != 2 or K + 1 > img.size:
        raise FeatureError(f"K={K} needs at least {K + 1} pixels, image has shape {img.shape}")
    r, c = zigzag_indices(*img.shape, K + 1)
    coef = dct2d(img)[r[1:], c[1:]].copy()
    coef.flags.writeable = False
    return FeatureVector(coef, sgn(coef))


def _signs(f: FeatureVector | np.ndarray) -> np.ndarray:
    return f.signs if isinstance(f, FeatureVector) else np.asarray(f)


def zw_map(feature: FeatureVector | np.ndarray, wm: np.ndarray) -> np.ndarray:
    """Secret key ``eta * xi`` (elementwise).  Needs ``K == N``."""
    eta = _signs(feature)
    wm = np.asarray(wm)
    if eta.shape != wm.shape:
        raise DimensionError(
            f"zero-watermarking needs equal feature and watermark lengths, got {eta.size} and {wm.size}"
        )
    return as_bipolar(eta.astype(np.int8) * wm.astype(np.int8))


def zw_extract(feature: FeatureVector | np.ndarray, key: np.ndarray) -> np.ndarray:
    """Watermark ``key * eta``; inverts :func:`zw_map` since ``eta^2 = 1``."""
    eta = _signs(feature)
    key = np.asarray(key)
    if eta.shape != key.shape:
        raise DimensionError(f"feature length {eta.size} != key length {key.size}")
    return as_bipolar(eta.astype(np.int8) * key.astype(np.int8))


def image_store(images: Sequence[np.ndarray], watermarks: Sequence[np.ndarray], K: int) -> PatternStore:
    if len(images) != len(watermarks):
        raise FeatureError(f"{len(images)} images but {len(watermarks)} watermarks")
    if not images:
        raise FeatureError("need at least one image")
    keys = np.stack([extract_features(img, K).signs for img in images])
    return PatternStore(keys, np.stack([np.asarray(w) for w in watermarks]))


def awm_map_images(
    images: Sequence[np.ndarray], watermarks: Sequence[np.ndarray], K: int
) -> tuple[HeteroWeights, AutoWeights]:
    """Train both layers on (image feature, watermark) pairs."""
    store = image_store(images, watermarks, K)
    return train_hetero(store), train_auto(store)


def awm_extract_image(
    img: np.ndarray,
    hw: HeteroWeights,
    aw: AutoWeights,
    K: int | None = None,
    t_max: int = DEFAULT_T_MAX,
) -> tuple[np.ndarray, RecallTrace]:
    K = hw.K if K is None else K
    if K != hw.K:
        raise DimensionError(f"weights expect K={hw.K}, asked for K={K}")
    y = extract_features(img, K).signs
    trace = awm_recall(y, hetero=hw, auto=aw, t_max=t_max, engine="dense")
    return trace.final_state, trace


def sign_bias(features: np.ndarray) -> float:
    """Mean sign over a feature matrix; 0 for the unbiased patterns theory assumes."""
    return float(np.mean(features))


def _ceil_log2(P: int) -> int:
    return (P - 1).bit_length()


def info_cost_zero(P: int, K: int) -> int:
    """Bits for ``P`` secret keys plus the two ``ceil(log2 P)``-bit indices each."""
    if P < 1:
        raise ValueError(f"P must be >= 1, got {P}")
    return P * (K + 2 * _ceil_log2(P))


def info_cost_awm(P: int, K: int, N: int) -> int:
    """Bits for the hetero matrix plus the upper triangle of the auto matrix."""
    if P < 2:
        raise ValueError("weight width ceil(log2 P) is undefined for P < 2")
    if N < 2:
        raise ValueError(f"N must be >= 2, got {N}")
    width = _ceil_log2(P)
    return N * K * width + (N * (N - 1) // 2) * width
