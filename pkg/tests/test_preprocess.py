import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from fusionbiopsy.core import Laterality
from fusionbiopsy.preprocess import (AugmentConfig, NotSquare, PreprocessConfig,
                                     augment, border_mean, contrast_stretch,
                                     flip_to_right, normalize_unit, pad_square,
                                     preprocess, resize_bilinear)

from conftest import gray

finite_images = hnp.arrays(
    dtype=np.float64,
    shape=hnp.array_shapes(min_dims=2, max_dims=2, min_side=2, max_side=24),
    elements=st.floats(0.0, 1000.0, allow_nan=False, allow_infinity=False),
)


class TestPadSquare:
    def test_already_square_unchanged(self):
        img = gray(np.arange(16.0).reshape(4, 4))
        assert pad_square(img) is img

    def test_zero_border_pads_with_zero(self):
        a = np.zeros((2, 4))
        out = pad_square(gray(a))
        assert out.pixels.shape == (4, 4)
        assert np.all(out.pixels == 0.0)

    def test_constant_fill(self):
        out = pad_square(gray(np.full((3, 5), 7.0)))
        assert out.pixels.shape == (5, 5)
        assert np.all(out.pixels == 7.0)

    def test_centered_with_trailing_extra_pixel(self):
        # height 2 into side 5: one row above, two below
        a = np.ones((2, 5))
        out = pad_square(gray(a)).pixels
        assert np.all(out[1:3, :] == 1.0)

    @given(finite_images)
    @settings(max_examples=60, deadline=None)
    def test_output_square_and_content_preserved(self, a):
        img = gray(a)
        out = pad_square(img)
        side = max(a.shape)
        assert out.pixels.shape == (side, side)
        top = (side - a.shape[0]) // 2
        left = (side - a.shape[1]) // 2
        assert np.array_equal(
            out.pixels[top:top + a.shape[0], left:left + a.shape[1]], a)


class TestBorderMean:
    def test_band_width_is_ceil(self):
        a = np.zeros((10, 10))
        a[0, :] = 1.0
        # border_frac 0.05 -> band ceil(0.5) = 1: 36 border pixels, 10 ones
        assert border_mean(a, 0.05) == pytest.approx(10 / 36)

    def test_degenerate_band_falls_back_to_full_mean(self):
        a = np.array([[1.0, 3.0], [5.0, 7.0]])
        assert border_mean(a, 0.25) == 4.0


class TestContrastStretch:
    def test_constant_unchanged(self):
        img = gray(np.full((4, 4), 3.0))
        assert contrast_stretch(img) is img

    def test_hand_example(self):
        img = gray(np.array([[10.0, 20.0, 30.0]]))
        cfg = PreprocessConfig(stretch_lo_percentile=0.0,
                               stretch_hi_percentile=100.0)
        out = contrast_stretch(img, cfg)
        assert np.allclose(out.pixels, [[0.0, 15.0, 30.0]])

    @given(finite_images)
    @settings(max_examples=60, deadline=None)
    def test_monotone_where_not_clipped(self, a):
        img = gray(a)
        out = contrast_stretch(img).pixels
        lo = np.percentile(a, 1.0)
        hi = np.percentile(a, 99.0)
        inside = (a > lo) & (a < hi)
        xs = a[inside].ravel()
        ys = out[inside].ravel()
        order = np.argsort(xs, kind="stable")
        assert np.all(np.diff(ys[order]) >= -1e-12)


class TestNormalizeUnit:
    def test_divides_by_max(self):
        out = normalize_unit(gray([[0.0, 2.0], [4.0, 1.0]]))
        assert out.normalized
        assert np.array_equal(out.pixels, [[0.0, 0.5], [1.0, 0.25]])

    def test_idempotent(self):
        img = gray([[0.25, 0.5]], normalized=True)
        assert normalize_unit(img) is img

    def test_zero_image(self):
        out = normalize_unit(gray(np.zeros((3, 3))))
        assert out.normalized and np.all(out.pixels == 0.0)

    def test_rejects_negative(self):
        with pytest.raises(ValueError):
            normalize_unit(gray([[-1.0, 1.0]]))


class TestResizeBilinear:
    def test_requires_square(self):
        with pytest.raises(NotSquare):
            resize_bilinear(gray(np.zeros((2, 3))), 2)

    def test_identity_when_same_size(self):
        img = gray(np.arange(9.0).reshape(3, 3))
        assert resize_bilinear(img, 3) is img

    def test_checkerboard_downsample_exact_half(self):
        board = np.indices((4, 4)).sum(axis=0) % 2
        out = resize_bilinear(gray(board.astype(float)), 2)
        assert np.array_equal(out.pixels, np.full((2, 2), 0.5))

    def test_constant_preserved(self):
        out = resize_bilinear(gray(np.full((5, 5), 0.3), normalized=True), 8)
        assert np.allclose(out.pixels, 0.3)

    def test_values_within_input_range(self):
        rng = np.random.default_rng(3)
        a = rng.uniform(size=(7, 7))
        out = resize_bilinear(gray(a), 11).pixels
        assert out.min() >= a.min() - 1e-12 and out.max() <= a.max() + 1e-12


class TestFlip:
    def test_right_unchanged(self):
        img = gray([[1.0, 2.0]])
        assert flip_to_right(img, Laterality.RIGHT) is img

    def test_left_flipped_and_involutive(self):
        img = gray([[1.0, 2.0]])
        once = flip_to_right(img, Laterality.LEFT)
        assert np.array_equal(once.pixels, [[2.0, 1.0]])
        assert flip_to_right(once, Laterality.LEFT) == img


class TestChain:
    def test_output_contract(self):
        rng = np.random.default_rng(0)
        img = gray(rng.uniform(0, 4000, size=(37, 61)))
        out = preprocess(img, Laterality.RIGHT)
        assert out.pixels.shape == (256, 256)
        assert out.normalized
        assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0

    def test_mirrored_pair_identical(self):
        rng = np.random.default_rng(1)
        right = gray(rng.uniform(0, 100, size=(20, 31)))
        left = gray(np.fliplr(right.pixels))
        cfg = PreprocessConfig(target_size=32)
        out_r = preprocess(right, Laterality.RIGHT, cfg)
        out_l = preprocess(left, Laterality.LEFT, cfg)
        assert np.allclose(out_r.pixels, out_l.pixels, atol=1e-12)

    def test_constant_image_stays_constant(self):
        out = preprocess(gray(np.full((10, 14), 9.0)), Laterality.LEFT,
                         PreprocessConfig(target_size=16))
        assert np.allclose(out.pixels, out.pixels[0, 0])


class _FakeRng:
    """Deterministic stand-in feeding fixed augmentation draws."""

    def __init__(self, draws):
        self.draws = list(draws)

    def uniform(self, lo, hi):
        frac = self.draws.pop(0)  # 0..1 position inside [lo, hi]
        return lo + frac * (hi - lo)


class TestAugment:
    def test_all_zero_config_is_identity(self):
        img = gray(np.random.default_rng(0).uniform(size=(8, 8)), normalized=True)
        out = augment(img, AugmentConfig(0.0, 0.0, 0.0),
                      np.random.default_rng(1))
        assert out == img

    def test_constant_image_invariant(self):
        img = gray(np.full((16, 16), 0.4), normalized=True)
        out = augment(img, AugmentConfig(), np.random.default_rng(2))
        assert np.allclose(out.pixels, 0.4)

    def test_pure_function_of_rng_state(self):
        img = gray(np.random.default_rng(3).uniform(size=(16, 16)), normalized=True)
        a = augment(img, AugmentConfig(), np.random.default_rng(9))
        b = augment(img, AugmentConfig(), np.random.default_rng(9))
        assert a == b

    def test_mirror_relation(self):
        # Augmenting the mirrored image with mirrored parameters
        # (dx -> -dx, angle -> -angle) equals mirroring the augmented image.
        img = gray(np.random.default_rng(4).uniform(size=(16, 16)), normalized=True)
        mirrored = gray(np.fliplr(img.pixels), normalized=True)
        cfg = AugmentConfig()
        draws = [0.7, 0.3, 0.6, 0.8]  # dx, dy, zoom, angle positions
        flipped_draws = [1.0 - draws[0], draws[1], draws[2], 1.0 - draws[3]]
        out = augment(img, cfg, _FakeRng(draws))
        out_m = augment(mirrored, cfg, _FakeRng(flipped_draws))
        assert np.allclose(np.fliplr(out.pixels), out_m.pixels, atol=1e-12)

    def test_output_range_clipped_for_normalized(self):
        img = gray(np.random.default_rng(5).uniform(size=(12, 12)), normalized=True)
        out = augment(img, AugmentConfig(0.3, 0.3, 45.0), np.random.default_rng(6))
        assert out.normalized
        assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0

    def test_shift_moves_content(self):
        a = np.zeros((16, 16))
        a[8, 8] = 1.0
        img = gray(a, normalized=True)
        out = augment(img, AugmentConfig(shift_frac=0.25, zoom_frac=0.0,
                                         rot_deg=0.0),
                      _FakeRng([1.0, 0.5, 0.5, 0.5]))  # dx = +4 px, dy = 0
        assert out.pixels[8, 12] == 1.0


class TestConfigValidation:
    def test_preprocess_config_bounds(self):
        with pytest.raises(ValueError):
            PreprocessConfig(stretch_lo_percentile=99.0, stretch_hi_percentile=1.0)
        with pytest.raises(ValueError):
            PreprocessConfig(target_size=4)
        with pytest.raises(ValueError):
            PreprocessConfig(border_frac=0.0)

    def test_augment_config_bounds(self):
        with pytest.raises(ValueError):
            AugmentConfig(shift_frac=-0.1)
