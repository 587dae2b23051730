import math

import numpy as np
import pytest

from fusionbiopsy.core import GrayImage, Laterality, View
from fusionbiopsy.generators import (ExternalGenerator, GeneratorError,
                                     IdentityGenerator, LinearGenerator,
                                     MissingExternalImage,
                                     NoisyIdentityGenerator, ShapeMismatch,
                                     UndefinedMax, SSIM_B1, SSIM_B2,
                                     SSIM_SIGMA, SSIM_WINDOW, eval_generation,
                                     generator_from_spec, mse, psnr, ssim)
from fusionbiopsy.raster import write_pgm

from conftest import gray, random_image


def ssim_loop_oracle(x: np.ndarray, y: np.ndarray) -> float:
    """Direct per-window evaluation with explicit loops."""
    r = np.arange(SSIM_WINDOW) - (SSIM_WINDOW - 1) / 2.0
    g = np.exp(-(r ** 2) / (2.0 * SSIM_SIGMA ** 2))
    k = np.outer(g, g)
    k /= k.sum()
    h, w = x.shape
    vals = []
    for i in range(h - SSIM_WINDOW + 1):
        for j in range(w - SSIM_WINDOW + 1):
            wx = x[i:i + SSIM_WINDOW, j:j + SSIM_WINDOW]
            wy = y[i:i + SSIM_WINDOW, j:j + SSIM_WINDOW]
            mu_x = (k * wx).sum()
            mu_y = (k * wy).sum()
            var_x = (k * (wx - mu_x) ** 2).sum()
            var_y = (k * (wy - mu_y) ** 2).sum()
            cov = (k * (wx - mu_x) * (wy - mu_y)).sum()
            num = (2 * mu_x * mu_y + SSIM_B1) * (2 * cov + SSIM_B2)
            den = (mu_x ** 2 + mu_y ** 2 + SSIM_B1) * (var_x + var_y + SSIM_B2)
            vals.append(num / den)
    return float(np.mean(vals))


class TestIdentity:
    def test_returns_input(self):
        img = random_image(np.random.default_rng(0))
        assert IdentityGenerator().generate(img) is img


class TestLinear:
    def test_identity_affine(self):
        img = random_image(np.random.default_rng(1))
        out = LinearGenerator(1.0, 0.0).generate(img)
        assert np.array_equal(out.pixels, img.pixels)

    def test_fit_recovers_halving(self):
        img = random_image(np.random.default_rng(2))
        target = GrayImage(0.5 * img.pixels, normalized=True)
        gen = LinearGenerator.fit(img, target)
        assert gen.a == pytest.approx(0.5, abs=1e-9)
        assert gen.b == pytest.approx(0.0, abs=1e-9)
        out = gen.generate(img)
        assert mse(target, out) == pytest.approx(0.0, abs=1e-18)

    def test_fit_constant_source(self):
        src = gray(np.full((8, 8), 0.3), normalized=True)
        tgt = random_image(np.random.default_rng(3), 8, 8)
        gen = LinearGenerator.fit(src, tgt)
        assert gen.a == 0.0 and gen.b == pytest.approx(tgt.pixels.mean())

    def test_output_clipped(self):
        img = random_image(np.random.default_rng(4))
        out = LinearGenerator(5.0, -1.0).generate(img)
        assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0


class TestNoisyIdentity:
    def test_pure_function_of_input(self):
        img = random_image(np.random.default_rng(5))
        gen = NoisyIdentityGenerator(sigma=0.05, seed=3)
        a = gen.generate(img)
        b = gen.generate(img)
        assert a == b

    def test_differs_from_input(self):
        img = random_image(np.random.default_rng(6))
        out = NoisyIdentityGenerator(sigma=0.05).generate(img)
        assert not np.array_equal(out.pixels, img.pixels)
        assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0

    def test_seed_changes_noise(self):
        img = random_image(np.random.default_rng(7))
        a = NoisyIdentityGenerator(sigma=0.05, seed=0).generate(img)
        b = NoisyIdentityGenerator(sigma=0.05, seed=1).generate(img)
        assert not np.array_equal(a.pixels, b.pixels)


class TestExternal:
    def test_loads_by_pattern(self, tmp_path):
        img = random_image(np.random.default_rng(8), 16, 16)
        write_pgm(tmp_path / "p1_R_CC.pgm", img)
        gen = ExternalGenerator(str(tmp_path / "{patient_id}_{laterality}_{view}.pgm"))
        out = gen.generate(img, key=("p1", Laterality.RIGHT, View.CC))
        assert out.pixels.shape == (16, 16)
        assert out.normalized

    def test_missing_image(self, tmp_path):
        gen = ExternalGenerator(str(tmp_path / "{patient_id}_{laterality}_{view}.pgm"))
        img = random_image(np.random.default_rng(9))
        with pytest.raises(MissingExternalImage):
            gen.generate(img, key=("p9", Laterality.LEFT, View.MLO))

    def test_shape_mismatch(self, tmp_path):
        write_pgm(tmp_path / "p1_R_CC.pgm",
                  random_image(np.random.default_rng(10), 8, 8))
        gen = ExternalGenerator(str(tmp_path / "{patient_id}_{laterality}_{view}.pgm"))
        with pytest.raises(ShapeMismatch):
            gen.generate(random_image(np.random.default_rng(11), 16, 16),
                         key=("p1", Laterality.RIGHT, View.CC))


class TestGeneratorSpec:
    def test_kinds(self):
        assert isinstance(generator_from_spec({"kind": "identity"}),
                          IdentityGenerator)
        gen = generator_from_spec({"kind": "linear", "a": 0.5, "b": 0.1})
        assert gen.a == 0.5 and gen.b == 0.1
        gen = generator_from_spec({"kind": "noisy_identity", "sigma": 0.1})
        assert gen.sigma == 0.1
        gen = generator_from_spec({"kind": "external", "pattern": "x/{view}.pgm"})
        assert isinstance(gen, ExternalGenerator)

    def test_unknown_kind(self):
        with pytest.raises(GeneratorError):
            generator_from_spec({"kind": "diffusion"})


class TestMse:
    def test_identity_zero(self):
        img = random_image(np.random.default_rng(12))
        assert mse(img, img) == 0.0

    def test_symmetric(self):
        rng = np.random.default_rng(13)
        a, b = random_image(rng), random_image(rng)
        assert mse(a, b) == mse(b, a)

    def test_bounded_for_normalized(self):
        a = gray(np.zeros((4, 4)), normalized=True)
        b = gray(np.ones((4, 4)), normalized=True)
        assert mse(a, b) == 1.0

    def test_shape_mismatch(self):
        with pytest.raises(ShapeMismatch):
            mse(gray(np.zeros((2, 2))), gray(np.zeros((3, 3))))


class TestPsnr:
    def test_constant_pair_twenty_db(self):
        target = gray(np.full((16, 16), 1.0), normalized=True)
        synth = gray(np.full((16, 16), 0.9), normalized=True)
        assert psnr(target, synth) == 20.0

    def test_infinite_on_identity(self):
        img = random_image(np.random.default_rng(14))
        assert math.isinf(psnr(img, img))

    def test_undefined_max(self):
        target = gray(np.zeros((4, 4)), normalized=True)
        synth = gray(np.full((4, 4), 0.5), normalized=True)
        with pytest.raises(UndefinedMax):
            psnr(target, synth)

    def test_monotone_in_mse(self):
        target = gray(np.full((8, 8), 1.0), normalized=True)
        prev = math.inf
        for err in (0.01, 0.05, 0.2, 0.8):
            synth = gray(np.full((8, 8), 1.0 - err), normalized=True)
            cur = psnr(target, synth)
            assert cur < prev
            prev = cur


class TestSsim:
    def test_self_similarity_exactly_one(self):
        rng = np.random.default_rng(15)
        for _ in range(20):
            img = random_image(rng, 16, 16)
            assert ssim(img, img) == 1.0

    def test_symmetric(self):
        rng = np.random.default_rng(16)
        a, b = random_image(rng, 16, 16), random_image(rng, 16, 16)
        assert ssim(a, b) == pytest.approx(ssim(b, a), abs=1e-15)

    def test_loop_oracle(self):
        rng = np.random.default_rng(17)
        for _ in range(5):
            a, b = random_image(rng, 32, 32), random_image(rng, 32, 32)
            assert ssim(a, b) == pytest.approx(
                ssim_loop_oracle(a.pixels, b.pixels), abs=1e-9)

    def test_too_small_rejected(self):
        with pytest.raises(ShapeMismatch):
            ssim(gray(np.zeros((8, 8))), gray(np.zeros((8, 8))))


class TestEvalGeneration:
    def test_identity_case(self):
        img = random_image(np.random.default_rng(18), 16, 16)
        q = eval_generation(img, img)
        assert q.mse == 0.0 and math.isinf(q.psnr) and q.ssim == 1.0
        assert q.as_dict()["psnr"] == "inf"

    def test_reports_finite_values(self):
        rng = np.random.default_rng(19)
        synth = random_image(rng, 16, 16)
        target = random_image(rng, 16, 16)
        q = eval_generation(synth, target)
        assert q.mse > 0.0 and math.isfinite(q.psnr) and -1.0 <= q.ssim <= 1.0
