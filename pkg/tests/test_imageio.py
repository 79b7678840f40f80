import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from awm.imageio import (
    ImageFormatError,
    format_float,
    format_pgm,
    list_corpus,
    parse_float,
    parse_pgm,
    read_image,
    write_image,
)

images8 = st.tuples(st.integers(1, 12), st.integers(1, 12)).flatmap(
    lambda hw: arrays(np.uint8, hw).map(lambda a: a.astype(np.float64))
)


class TestPgm:
    @given(images8, st.booleans())
    def test_roundtrip(self, img, ascii):
        assert np.array_equal(parse_pgm(format_pgm(img, ascii=ascii)), img)

    def test_header_comments(self):
        data = b"P2\n# made by hand\n3 2 # width height\n255\n0 1 2\n# mid comment\n3 4 255\n"
        assert parse_pgm(data).tolist() == [[0, 1, 2], [3, 4, 255]]

    def test_binary_comment_before_raster(self):
        data = b"P5\n# c\n2 1\n255\n" + bytes([7, 200])
        assert parse_pgm(data).tolist() == [[7, 200]]

    def test_sixteen_bit(self):
        data = b"P5 2 1 65535\n" + (1000).to_bytes(2, "big") + (65535).to_bytes(2, "big")
        assert parse_pgm(data).tolist() == [[1000, 65535]]

    def test_raster_byte_that_looks_like_whitespace(self):
        data = b"P5\n2 1\n255\n" + bytes([32, 10])
        assert parse_pgm(data).tolist() == [[32, 10]]

    @pytest.mark.parametrize(
        "data",
        [b"P6\n1 1\n255\n\x00", b"P5\n2 2\n255\n\x00", b"P5\n0 1\n255\n", b"P2\n2 2\n255\n1 2 3", b"P5\n2"],
    )
    def test_malformed(self, data):
        with pytest.raises(ImageFormatError):
            parse_pgm(data)

    def test_rejects_out_of_range(self):
        with pytest.raises(ImageFormatError):
            format_pgm(np.array([[256.0]]))
        with pytest.raises(ImageFormatError):
            format_pgm(np.array([[1.5]]))


class TestFloat:
    @given(st.tuples(st.integers(1, 9), st.integers(1, 9)).flatmap(
        lambda hw: arrays(np.float64, hw, elements=st.floats(-1e6, 1e6))))
    def test_roundtrip(self, img):
        data = format_float(img)
        assert data[:7] == b"AWMIMGF"
        assert np.array_equal(parse_float(data), img)

    def test_truncated(self):
        with pytest.raises(ImageFormatError):
            parse_float(format_float(np.zeros((2, 2)))[:-1])


class TestFiles:
    def test_suffix_dispatch_and_sniffing(self, tmp_path):
        img = np.array([[0.0, 255.0], [12.0, 13.0]])
        write_image(tmp_path / "a.pgm", img)
        write_image(tmp_path / "b.awmf", img - 300.5)
        assert (tmp_path / "a.pgm").read_bytes()[:2] == b"P5"
        assert np.array_equal(read_image(tmp_path / "a.pgm"), img)
        assert np.array_equal(read_image(tmp_path / "b.awmf"), img - 300.5)
        assert [p.name for p in list_corpus(tmp_path)] == ["a.pgm", "b.awmf"]

    def test_unknown_format(self, tmp_path):
        (tmp_path / "x.pgm").write_bytes(b"GIF89a")
        with pytest.raises(ImageFormatError):
            read_image(tmp_path / "x.pgm")

    def test_missing_or_empty_corpus(self, tmp_path):
        with pytest.raises(ImageFormatError):
            list_corpus(tmp_path / "nope")
        with pytest.raises(ImageFormatError):
            list_corpus(tmp_path)
