import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from awm.attacks import LUMINANCE_TABLE, JpegParams, NoiseParams, gaussian_attack, jpeg_attack, quant_table
from awm.patterns import PatternError, overlap
from awm.watermark import extract_features


def dct_matrix(n=8):
    m = np.zeros((n, n))
    for u in range(n):
        c = math.sqrt(1 / n) if u == 0 else math.sqrt(2 / n)
        for x in range(n):
            m[u, x] = c * math.cos(math.pi * (2 * x + 1) * u / (2 * n))
    return m


def jpeg_oracle(img, q):
    """Block-by-block reference with explicit matrices; returns pixels before the final rounding."""
    scale = 5000 // q if q < 50 else 200 - 2 * q
    table = [[min(255, max(1, (int(b) * scale + 50) // 100)) for b in row] for row in LUMINANCE_TABLE]
    h, w = img.shape
    H, W = -(-h // 8) * 8, -(-w // 8) * 8
    padded = np.empty((H, W))
    for i in range(H):
        for j in range(W):
            padded[i, j] = img[min(i, h - 1), min(j, w - 1)]
    D = dct_matrix()
    out = np.empty((H, W))
    for bi in range(0, H, 8):
        for bj in range(0, W, 8):
            block = padded[bi : bi + 8, bj : bj + 8] - 128.0
            coef = D @ block @ D.T
            for u in range(8):
                for v in range(8):
                    x = round(coef[u, v] / table[u][v], 9)
                    coef[u, v] = math.copysign(math.floor(abs(x) + 0.5), x) * table[u][v]
            out[bi : bi + 8, bj : bj + 8] = D.T @ coef @ D + 128.0
    return np.clip(out[:h, :w], 0, 255)


class TestQuantTable:
    def test_quality_50_is_base(self):
        assert np.array_equal(quant_table(50), LUMINANCE_TABLE)

    def test_quality_100_all_ones(self):
        assert np.all(quant_table(100) == 1)

    def test_low_quality_clipped(self):
        t = quant_table(5)  # scale 1000
        assert t[0, 0] == 160
        assert t.max() == 255
        assert quant_table(1).min() == 255

    @pytest.mark.parametrize("q", [0, 101, -5])
    def test_range(self, q):
        with pytest.raises(ValueError):
            JpegParams(q)


class TestJpeg:
    @pytest.mark.parametrize("q", [5, 37, 50, 75, 100])
    def test_matches_reference(self, rng, q):
        img = np.round(rng.uniform(0, 255, (13, 21)))
        assert np.array_equal(jpeg_attack(img, JpegParams(q)), np.floor(np.round(jpeg_oracle(img, q), 9) + 0.5))

    def test_matches_reference_natural(self):
        from corpus import gray_image

        img = gray_image("camera", 64)
        assert np.array_equal(jpeg_attack(img, 5), np.floor(np.round(jpeg_oracle(img, 5), 9) + 0.5))

    @settings(max_examples=30)
    @given(st.floats(0, 255), st.integers(1, 100), st.integers(1, 20), st.integers(1, 20))
    def test_constant_image(self, c, q, h, w):
        out = jpeg_attack(np.full((h, w), c), JpegParams(q))
        assert np.all(out == out[0, 0])
        # DC survives up to the rounding of its own quantizer step (8 * level / step)
        step = quant_table(q)[0, 0]
        dc = 8 * (c - 128)
        recon = math.copysign(math.floor(abs(dc / step) + 0.5), dc) * step / 8 + 128
        assert out[0, 0] == math.floor(round(min(255, max(0, recon)), 9) + 0.5)

    def test_q100_representable_image(self, rng):
        # pixels built from integer coefficients on every block: quantization at step 1 is lossless
        from awm.watermark import idct2d

        coef = np.round(rng.normal(0, 20, (16, 16)))
        img = np.round(np.clip(128 + idct2d(coef), 0, 255))
        assert np.abs(jpeg_attack(img, 100) - img).max() <= 1

    def test_q100_natural(self, corpus_dir):
        from awm.imageio import list_corpus, read_image

        for p in list_corpus(corpus_dir):
            img = read_image(p)
            assert np.abs(jpeg_attack(img, 100) - img).max() <= 1

    def test_preserves_shape_and_range(self, rng):
        img = rng.uniform(-50, 400, (17, 9))
        out = jpeg_attack(img, 20)
        assert out.shape == img.shape
        assert out.min() >= 0 and out.max() <= 255
        assert np.array_equal(out, np.round(out))

    def test_q5_degrades_natural_images(self, corpus_dir):
        from awm.imageio import list_corpus, read_image

        for p in list_corpus(corpus_dir):
            img = read_image(p)
            f0 = extract_features(img, 2000).signs
            assert overlap(f0, extract_features(jpeg_attack(img, 5), 2000).signs) < 1.0

    def test_median_overlap_monotone_in_quality(self, corpus_dir):
        from awm.imageio import list_corpus, read_image

        imgs = [read_image(p) for p in list_corpus(corpus_dir)]
        assert len(imgs) >= 10
        medians = []
        for q in (90, 50, 20, 5):
            ms = []
            for img in imgs:
                f0 = extract_features(img, 2000).signs
                ms.append(overlap(f0, extract_features(jpeg_attack(img, q), 2000).signs))
            medians.append(np.median(ms))
        assert all(a >= b for a, b in zip(medians, medians[1:]))


class TestNoise:
    def test_identity(self, rng):
        img = rng.uniform(0, 255, (5, 6))
        assert np.array_equal(gaussian_attack(img, NoiseParams(0, 0, seed=3)), img)

    def test_pure_shift(self, rng):
        img = rng.uniform(0, 255, (5, 6))
        assert np.array_equal(gaussian_attack(img, NoiseParams(100, 0, seed=3)), img + 100)

    def test_statistics_512(self):
        img = np.zeros((512, 512))
        d = gaussian_attack(img, NoiseParams(100, 100, seed=42))
        assert abs(d.mean() - 100) < 1.5
        assert abs(d.std() - 100) < 1.5

    def test_unclamped_by_default(self):
        out = gaussian_attack(np.full((64, 64), 250.0), NoiseParams(100, 100, seed=1))
        assert out.max() > 255 and out.min() < 0
        clamped = gaussian_attack(np.full((64, 64), 250.0), NoiseParams(100, 100, seed=1, clamp=True))
        assert clamped.max() == 255 and clamped.min() == 0

    def test_reproducible_and_seeded(self, rng):
        img = rng.uniform(0, 255, (9, 9))
        a = gaussian_attack(img, NoiseParams(1, 5, seed=7))
        assert np.array_equal(a, gaussian_attack(img, NoiseParams(1, 5, seed=7)))
        assert not np.array_equal(a, gaussian_attack(img, NoiseParams(1, 5, seed=8)))
        assert not np.array_equal(a, gaussian_attack(img, NoiseParams(1, 5, seed=7, stream=1)))

    def test_row_major_draw_order(self):
        # a wider image reuses the same draws in row-major order
        a = gaussian_attack(np.zeros((1, 12)), NoiseParams(0, 1, seed=5))
        b = gaussian_attack(np.zeros((3, 4)), NoiseParams(0, 1, seed=5))
        assert np.array_equal(a.reshape(3, 4), b)

    def test_validation(self):
        with pytest.raises(ValueError):
            NoiseParams(0, -1)
        with pytest.raises(PatternError):
            NoiseParams(0, 1, seed=-1)


class TestTies:
    def test_dc_tie_rounds_away_from_zero(self):
        # block sum - 128*64 = 4 -> DC = 0.5 exactly at step 1 -> rounds to 1 -> +1/8 per pixel
        img = np.full((8, 8), 128.0)
        img[0, :4] = 129.0
        out = jpeg_attack(img, 100)
        assert np.array_equal(out, np.floor(np.round(jpeg_oracle(img, 100), 9) + 0.5))
