import json
import time

import numpy as np
import pytest

from conftest import complex_normal
from gancs.metrics import (
    SNR_CAP_DB,
    MetricReport,
    center_crop_slices,
    evaluate,
    nrmse,
    snr_db,
    ssim_cropped,
    time_reconstruction,
)


class TestSNR:
    def test_identical_is_capped(self, rng):
        x = complex_normal(rng, (8, 8))
        assert snr_db(x, x) == SNR_CAP_DB == 300.0

    def test_scaled_estimate(self, rng):
        x = complex_normal(rng, (8, 8))
        assert snr_db(x, 1.1 * x) == pytest.approx(20.0, abs=1e-9)

    def test_zero_estimate(self, rng):
        x = complex_normal(rng, (8, 8))
        assert snr_db(x, np.zeros_like(x)) == pytest.approx(0.0, abs=1e-12)

    def test_error_halving(self, rng):
        for _ in range(20):
            x = complex_normal(rng, (16, 16))
            e = 0.3 * complex_normal(rng, (16, 16))
            assert snr_db(x, x + e / 2) - snr_db(x, x + e) == pytest.approx(20 * np.log10(2), abs=1e-9)

    def test_errors(self):
        with pytest.raises(ValueError):
            snr_db(np.zeros((4, 4)), np.ones((4, 4)))
        with pytest.raises(ValueError):
            snr_db(np.ones((4, 4)), np.ones((4, 5)))


class TestNRMSE:
    def test_examples(self, rng):
        x = complex_normal(rng, (16, 16))
        assert nrmse(x, x) == 0.0
        assert nrmse(x, np.zeros_like(x)) == pytest.approx(1.0)

    def test_orthogonal_perturbation(self, rng):
        x = complex_normal(rng, (16, 16))
        e = complex_normal(rng, (16, 16))
        e -= np.vdot(x, e) / np.vdot(x, x) * x
        assert abs(np.vdot(x, e)) < 1e-10
        e *= 0.2 * np.linalg.norm(x) / np.linalg.norm(e)
        assert nrmse(x, x + e) == pytest.approx(0.2, abs=1e-12)
        # orthogonality puts the estimate's norm on the Pythagorean circle
        assert np.linalg.norm(x + e) == pytest.approx(np.sqrt(1.04) * np.linalg.norm(x))

    def test_triangle(self, rng):
        x, y, z = (complex_normal(rng, (8, 8)) for _ in range(3))
        assert nrmse(x, z) <= nrmse(x, y) + np.linalg.norm(y - z) / np.linalg.norm(x) + 1e-12

    def test_zero_reference(self):
        with pytest.raises(ValueError):
            nrmse(np.zeros(3), np.ones(3))


class TestSSIM:
    def test_identical(self, rng):
        x = complex_normal(rng, (64, 64))
        assert ssim_cropped(x, x, 50) == 1.0

    def test_inverted_contrast(self, rng):
        x = rng.random((64, 64))
        assert ssim_cropped(x, 1.0 - x, 50, data_range=1.0) < 0.5

    def test_crop_indices(self):
        rows, cols = center_crop_slices((200, 100), 50)
        assert (rows.start, rows.stop - 1, cols.start, cols.stop - 1) == (75, 124, 25, 74)

    def test_only_crop_matters(self, rng):
        x = rng.random((200, 100))
        y = x + 0.1 * rng.random((200, 100))
        z = y.copy()
        z[:75] = 0
        z[:, 75:] = 5
        assert ssim_cropped(x, y, 50) == ssim_cropped(x, z, 50)

    def test_crop_too_large(self):
        with pytest.raises(ValueError):
            ssim_cropped(np.ones((40, 60)), np.ones((40, 60)), 50)

    def test_range_from_reference_is_asymmetric(self, rng):
        x = rng.random((64, 64))
        y = 2.0 * x + 0.05 * rng.random((64, 64))
        assert ssim_cropped(x, y, 50) != pytest.approx(ssim_cropped(y, x, 50))
        assert ssim_cropped(x, y, 50, data_range=2.0) == pytest.approx(ssim_cropped(y, x, 50, data_range=2.0))

    @pytest.mark.parametrize("seed", range(5))
    def test_against_skimage(self, seed):
        metrics = pytest.importorskip("skimage.metrics")
        rng = np.random.default_rng(seed)
        x = rng.random((80, 70)) + 1j * rng.random((80, 70))
        y = x + 0.2 * (rng.random((80, 70)) - 0.5)
        rs, cs = center_crop_slices(x.shape, 50)
        a, b = np.abs(x[rs, cs]), np.abs(y[rs, cs])
        ref = metrics.structural_similarity(a, b, gaussian_weights=True, sigma=1.5, use_sample_covariance=False,
                                            data_range=a.max())
        assert ssim_cropped(x, y, 50) == pytest.approx(ref, abs=1e-10)


class TestTiming:
    def test_sleep(self):
        assert time_reconstruction(lambda: time.sleep(0.01), repeats=3) == pytest.approx(0.010, abs=0.005)

    def test_warmup_and_repeats(self):
        calls = []
        time_reconstruction(lambda: calls.append(1), repeats=1)
        assert len(calls) == 2
        with pytest.raises(ValueError):
            time_reconstruction(lambda: None, repeats=0)


def test_report_json(rng):
    x = complex_normal(rng, (32, 32))
    rep = evaluate(x, x + 0.1, crop=50, recon_time=0.25)
    d = json.loads(rep.to_json())
    assert list(d) == ["snr_db", "ssim", "nrmse", "recon_time_seconds"]
    assert MetricReport.from_json(rep.to_json()) == rep
    assert rep.ssim <= 1.0 and rep.nrmse >= 0
