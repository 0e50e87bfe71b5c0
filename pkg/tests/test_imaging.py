"""Image container, resampling convention, and PNM round-trips."""

import numpy as np
import pytest

from curvetext.imaging import Image, resize_bilinear, sample_bilinear_np
from curvetext.pnm import PnmError, read_pnm, write_pnm


class TestImage:
    def test_grayscale_promotes_channel_axis(self):
        img = Image(np.zeros((4, 6)))
        assert (img.height, img.width, img.channels) == (4, 6, 1)

    def test_rejects_bad_channel_count(self):
        with pytest.raises(ValueError):
            Image(np.zeros((4, 6, 2)))

    def test_rejects_non_finite(self):
        data = np.zeros((2, 2))
        data[0, 0] = np.nan
        with pytest.raises(ValueError):
            Image(data)

    def test_gray_round_trip(self):
        rng = np.random.default_rng(0)
        img = Image(rng.uniform(0, 1, (3, 5)))
        rgb = img.to_rgb()
        assert rgb.channels == 3
        np.testing.assert_allclose(rgb.to_gray().data, img.data, atol=1e-12)


class TestResize:
    def test_identity_resize(self):
        rng = np.random.default_rng(1)
        img = Image(rng.uniform(0, 1, (7, 9)))
        out = resize_bilinear(img, 7, 9)
        np.testing.assert_allclose(out.data, img.data, atol=1e-12)

    def test_constant_preserved(self):
        img = Image(np.full((5, 8), 0.63))
        out = resize_bilinear(img, 13, 3)
        np.testing.assert_allclose(out.data, 0.63, atol=1e-12)

    def test_pixel_center_convention(self):
        img = np.zeros((1, 1, 4))
        img[0, 0, 2] = 1.0
        out = sample_bilinear_np(img, np.array([(2 + 0.5) / 4]), np.array([0.5]))
        np.testing.assert_allclose(out, [[1.0]])


class TestPnm:
    def test_pgm_round_trip(self, tmp_path):
        rng = np.random.default_rng(2)
        img = Image(np.round(rng.uniform(0, 1, (6, 9)) * 255) / 255)
        path = tmp_path / "x.pgm"
        write_pnm(path, img)
        back = read_pnm(path)
        np.testing.assert_allclose(back.data, img.data, atol=1e-12)

    def test_ppm_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        img = Image(np.round(rng.uniform(0, 1, (4, 5, 3)) * 255) / 255)
        path = tmp_path / "x.ppm"
        write_pnm(path, img)
        np.testing.assert_allclose(read_pnm(path).data, img.data, atol=1e-12)

    def test_rejects_ascii_format(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_bytes(b"P2\n2 2\n255\n0 0 0 0\n")
        with pytest.raises(PnmError, match="P5"):
            read_pnm(p)

    def test_rejects_16bit(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_bytes(b"P5\n2 2\n65535\n" + b"\x00" * 8)
        with pytest.raises(PnmError, match="8-bit"):
            read_pnm(p)

    def test_rejects_truncated(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_bytes(b"P5\n4 4\n255\n" + b"\x00" * 7)
        with pytest.raises(PnmError, match="truncated"):
            read_pnm(p)

    def test_comment_headers_parse(self, tmp_path):
        p = tmp_path / "a.pgm"
        p.write_bytes(b"P5\n# a comment\n2 1\n255\n\x10\x20")
        img = read_pnm(p)
        np.testing.assert_allclose(img.data[:, :, 0], [[16 / 255, 32 / 255]])
