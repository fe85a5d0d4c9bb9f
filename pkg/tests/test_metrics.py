import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyclegraph.errors import ShapeError, ValidationError
from cyclegraph.metrics import MetricReport, pixel_metrics, ssim


def test_identical_images():
    a = np.random.default_rng(0).random((16, 16, 3))
    mae, mse, rmse, psnr = pixel_metrics(a, a)
    assert (mae, mse, rmse, psnr) == (0.0, 0.0, 0.0, 99.0)
    assert ssim(a, a, channel_axis=2) == 1.0


def test_uniform_offset():
    a = np.random.default_rng(1).random((12, 12)) * 0.8
    mae, mse, rmse, psnr = pixel_metrics(a, a + 0.1, peak=1.0)
    assert mae == pytest.approx(0.1, abs=1e-12)
    assert mse == pytest.approx(0.01, abs=1e-12)
    assert psnr == pytest.approx(20.0, abs=1e-6)


def test_peak_scales_psnr():
    a = np.zeros((4, 4))
    assert pixel_metrics(a, a + 0.2, peak=2.0)[3] == pytest.approx(10 * np.log10(4 / 0.04))


def test_constant_images_closed_form():
    c1 = (0.01 * 1.0) ** 2
    expected = (2 * 0.2 * 0.8 + c1) / (0.2**2 + 0.8**2 + c1)
    assert ssim(np.full((16, 16), 0.2), np.full((16, 16), 0.8)) == pytest.approx(expected, abs=1e-12)


def test_errors():
    with pytest.raises(ShapeError):
        pixel_metrics(np.zeros((3, 3)), np.zeros((3, 4)))
    with pytest.raises(ValidationError):
        ssim(np.zeros((10, 12)), np.zeros((10, 12)))
    with pytest.raises(ValidationError):
        pixel_metrics(np.zeros(2), np.zeros(2), peak=0)


@settings(max_examples=100)
@given(seed=st.integers(0, 2**32 - 1))
def test_symmetry_and_power_mean(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((2, 12, 13, 3))
    m_ab = pixel_metrics(a, b)
    assert m_ab == pixel_metrics(b, a)
    assert m_ab[0] <= m_ab[2]
    assert abs(m_ab[2] - np.sqrt(m_ab[1])) < 1e-9
    assert ssim(a, b, channel_axis=2) == pytest.approx(ssim(b, a, channel_axis=2), abs=1e-12)
    assert -1 <= ssim(a, b, channel_axis=2) <= 1


@settings(max_examples=50)
@given(seed=st.integers(0, 2**32 - 1))
def test_pixel_metrics_permutation_invariant(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((2, 10, 10))
    perm = rng.permutation(100)
    pa = a.reshape(-1)[perm].reshape(10, 10)
    pb = b.reshape(-1)[perm].reshape(10, 10)
    np.testing.assert_allclose(pixel_metrics(pa, pb), pixel_metrics(a, b), rtol=1e-12)


def test_ssim_decreases_with_noise():
    rng = np.random.default_rng(5)
    yy, xx = np.mgrid[0:48, 0:48]
    img = 0.5 + 0.3 * np.sin(xx / 5.0) * np.cos(yy / 7.0)
    noise = rng.normal(size=img.shape)
    vals = [ssim(img, img + s * noise) for s in (0.01, 0.05, 0.1)]
    assert vals[0] > vals[1] > vals[2]


@pytest.mark.parametrize("seed", range(3))
def test_ssim_matches_scikit_image(seed):
    skm = pytest.importorskip("skimage.metrics")
    rng = np.random.default_rng(seed)
    a = rng.random((24, 20))
    b = np.clip(a + rng.normal(scale=0.1, size=a.shape), 0, 1)
    ref = skm.structural_similarity(a, b, data_range=1.0, gaussian_weights=True, sigma=1.5,
                                    use_sample_covariance=False)
    assert ssim(a, b) == pytest.approx(ref, abs=1e-9)


def test_report_serialization(tmp_path):
    rng = np.random.default_rng(6)
    rep = MetricReport()
    for _ in range(3):
        a, b = rng.random((2, 12, 12))
        rep.add(a, b)
    assert len(rep) == 3
    agg = rep.aggregate()
    assert agg["mse"] == pytest.approx(np.mean(rep.mse))
    data = json.loads(rep.write_json(tmp_path / "m.json").read_text())
    assert data["mean"] == agg
    lines = rep.write_csv(tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "frame,mae,mse,rmse,psnr,ssim" and len(lines) == 4
