import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from PIL import Image

from hilbertdepth.densify import DepthImage
from hilbertdepth.io_depth import (
    DepthFormatError,
    DepthPngCodec,
    DepthRangeError,
    colorize,
    downsample_nearest,
    read_depth_png,
    valid_fraction,
    write_color_png,
    write_depth_png,
)

depth_grids = arrays(
    np.float64, st.tuples(st.integers(1, 12), st.integers(1, 12)),
    # below 1/512 m the smallest code (1/256 m) is the nearest valid value
    elements=st.one_of(st.just(0.0), st.floats(1 / 512, 255.0)),
)


class TestCodec:

    def test_one_metre(self):
        assert DepthPngCodec().encode(DepthImage(np.array([[1.0, 0.0]]))).tolist() == [[256, 0]]

    def test_tiny_depth_stays_valid(self):
        assert DepthPngCodec().encode(np.array([[1e-4]]))[0, 0] == 1

    def test_overflow(self):
        with pytest.raises(DepthRangeError):
            DepthPngCodec().encode(np.array([[300.0]]))


class TestPngRoundTrip:

    @settings(max_examples=40, deadline=None)
    @given(depth_grids)
    def test_round_trip(self, tmp_path_factory, grid):
        path = tmp_path_factory.mktemp("png") / "d.png"
        write_depth_png(DepthImage(grid), path)
        back = read_depth_png(path)
        assert np.array_equal(back.values > 0, grid > 0)
        assert np.all(np.abs(back.values - grid) <= 1 / 512 + 1e-12)

    def test_file_is_16_bit(self, tmp_path):
        write_depth_png(DepthImage(np.full((3, 4), 12.5)), tmp_path / "d.png")
        with Image.open(tmp_path / "d.png") as im:
            assert im.mode.startswith("I;16") and im.size == (4, 3)
            assert np.array(im)[0, 0] == 3200

    def test_rejects_8_bit(self, tmp_path):
        Image.fromarray(np.zeros((2, 2), dtype=np.uint8)).save(tmp_path / "g.png")
        with pytest.raises(DepthFormatError):
            read_depth_png(tmp_path / "g.png")

    def test_missing(self, tmp_path):
        with pytest.raises(OSError):
            read_depth_png(tmp_path / "none.png")


class TestSparsity:

    def test_valid_fraction(self):
        assert valid_fraction(DepthImage(np.array([[0.0, 1.0], [2.0, 0.0]]))) == 0.5

    def test_downsample_identity(self, rng):
        v = rng.uniform(0, 5, (6, 8)) * (rng.random((6, 8)) > 0.5)
        assert np.array_equal(downsample_nearest(v, 8, 6).values, v)

    def test_downsample_picks_center_source(self):
        v = np.arange(1, 17, dtype=float).reshape(4, 4)
        # output pixel centres 0.5*2 = 1 and 1.5*2 = 3 in source coordinates
        assert downsample_nearest(v, 2, 2).values.tolist() == [[6.0, 8.0], [14.0, 16.0]]

    def test_downsample_densifies_sparse_rows(self):
        v = np.zeros((8, 8))
        v[1::2, 1::2] = 3.0
        assert valid_fraction(downsample_nearest(v, 4, 4)) > valid_fraction(v)


class TestColorize:

    def test_invalid_black(self, tmp_path):
        v = np.array([[0.0, 1.0, 10.0]])
        rgb = colorize(v)
        assert rgb.shape == (1, 3, 3) and rgb[0, 0].tolist() == [0, 0, 0]
        write_color_png(v, tmp_path / "c.png")
        assert (tmp_path / "c.png").stat().st_size > 0
