"""Synthetic corpus: determinism, golden fixture, split contracts."""

from pathlib import Path

import numpy as np
import pytest
from scipy import stats

from curvetext.corpus import (
    SYMBOLS,
    Curve,
    GlyphError,
    Perspective,
    Rotation,
    SampleSpec,
    SplitConfig,
    generate_split,
    render,
)
from curvetext.pnm import read_pnm

GOLDEN = Path(__file__).parent / "data" / "digit0_plain.pgm"


class TestRender:
    def test_deterministic_per_spec(self):
        spec = SampleSpec("3fa", Curve(5.0, 1.3), noise=0.05, seed=1234)
        a, _ = render(spec)
        b, _ = render(spec)
        np.testing.assert_array_equal(a.data, b.data)

    def test_golden_fixture(self):
        img, label = render(SampleSpec("0", None, noise=0.0, seed=0))
        assert label == "0"
        golden = read_pnm(GOLDEN)
        np.testing.assert_array_equal(
            np.rint(img.data * 255), np.rint(golden.data * 255)
        )

    def test_zero_amplitude_curve_equals_no_distortion(self):
        flat, _ = render(SampleSpec("b2d", None, noise=0.0, seed=9))
        curved, _ = render(SampleSpec("b2d", Curve(0.0, 2.2), noise=0.0, seed=9))
        np.testing.assert_array_equal(flat.data, curved.data)

    def test_canvas_shape_and_range(self):
        for dist in (None, Curve(6.0, 0.5), Perspective(4.0), Rotation(10.0)):
            img, _ = render(SampleSpec("abc", dist, noise=0.1, seed=5))
            assert (img.height, img.width, img.channels) == (36, 128, 1)
            assert img.data.min() >= 0.0 and img.data.max() <= 1.0

    def test_unknown_glyph_rejected(self):
        with pytest.raises(GlyphError, match="glyph"):
            render(SampleSpec("zz", None, 0.0, 0))

    def test_label_length_bounds(self):
        with pytest.raises(GlyphError):
            render(SampleSpec("", None, 0.0, 0))
        with pytest.raises(GlyphError):
            render(SampleSpec("123456789", None, 0.0, 0))

    def test_distortion_keeps_label(self):
        _, flat_label = render(SampleSpec("fade", None, 0.0, 3))
        _, curved_label = render(SampleSpec("fade", Curve(5.0, 0.1), 0.0, 3))
        assert flat_label == curved_label == "fade"


class TestGenerateSplit:
    def test_count_contract(self, tmp_path):
        manifest = generate_split(tmp_path, 16, seed=7)
        lines = manifest.read_text().splitlines()
        assert len(lines) == 16
        assert len(list((tmp_path / "images").glob("*.pgm"))) == 16

    def test_regeneration_identical_bytes(self, tmp_path):
        m1 = generate_split(tmp_path / "a", 12, seed=3)
        m2 = generate_split(tmp_path / "b", 12, seed=3)
        assert m1.read_bytes() == m2.read_bytes()
        for f1, f2 in zip(
            sorted((tmp_path / "a" / "images").iterdir()),
            sorted((tmp_path / "b" / "images").iterdir()),
        ):
            assert f1.read_bytes() == f2.read_bytes()

    def test_different_seeds_differ(self, tmp_path):
        m1 = generate_split(tmp_path / "a", 10, seed=1)
        m2 = generate_split(tmp_path / "b", 10, seed=2)
        assert m1.read_bytes() != m2.read_bytes()

    def test_label_distribution_uniform(self, tmp_path):
        manifest = generate_split(
            tmp_path, 2000, seed=11, cfg=SplitConfig(mix={"curve": 0.5, "none": 0.5})
        )
        counts = {s: 0 for s in SYMBOLS}
        for line in manifest.read_text().splitlines():
            for ch in line.split("\t")[1]:
                counts[ch] += 1
        observed = np.array([counts[s] for s in SYMBOLS])
        # chi-square goodness of fit against the uniform multinomial
        chi2, p = stats.chisquare(observed)
        assert p > 0.002, (chi2, p, observed)

    def test_manifest_paths_resolve(self, tmp_path):
        manifest = generate_split(tmp_path, 3, seed=5)
        for line in manifest.read_text().splitlines():
            rel, label = line.split("\t")
            img = read_pnm(tmp_path / rel)
            assert img.width == 128
            assert set(label) <= set(SYMBOLS)
