import math

import numpy as np
import pytest

from scripts.errors import DimensionError, DomainError
from scripts.load import RasterImage
from scripts.metrics import mse, psnr, quality_report, ssim, ssim_matrix

def _natural(size=32, seed=0):
    # gradiente suave con algo de ruido, como una foto
    rng = np.random.default_rng(seed)
    y, x = np.mgrid[0:size, 0:size]
    base = 40 + 3 * x + 2 * y + rng.normal(0, 5, size=(size, size))
    return RasterImage(np.clip(base, 0, 255).astype(np.uint8))

def test_mse_identity_and_constant_gap():
    zeros = RasterImage(np.zeros((3, 5, 7), dtype=np.uint8))
    twos = RasterImage(np.full((3, 5, 7), 2, dtype=np.uint8))
    assert mse(zeros, zeros) == 0.0
    assert mse(zeros, twos) == 4.0
    assert mse(twos, zeros) == 4.0

def test_mse_shape_mismatch():
    with pytest.raises(DimensionError):
        mse(RasterImage(np.zeros((2, 2), dtype=np.uint8)), RasterImage(np.zeros((2, 3), dtype=np.uint8)))

def test_psnr_values():
    assert psnr(0) == math.inf
    assert abs(psnr(1.0) - 48.13) < 0.01
    assert abs(psnr(0.476) - 51.35) < 0.01
    with pytest.raises(DomainError):
        psnr(-0.1)

def test_ssim_properties():
    img = _natural()
    inverted = RasterImage(255 - img.pixels)
    assert ssim(img, img) == pytest.approx(1.0)
    assert ssim(img, inverted) < 0.6
    assert ssim(img, inverted) == pytest.approx(ssim(inverted, img))
    flat = RasterImage(np.full((4, 4), 90, dtype=np.uint8))
    assert ssim(flat, flat) == pytest.approx(1.0)

def test_ssim_averages_channels():
    rng = np.random.default_rng(3)
    a = rng.integers(0, 256, size=(3, 8, 8), dtype=np.uint8)
    b = a.copy()
    b[1] = 255 - b[1]
    rgb = ssim(RasterImage(a), RasterImage(b))
    per_channel = [ssim(RasterImage(a[c]), RasterImage(b[c])) for c in range(3)]
    assert rgb == pytest.approx(np.mean(per_channel))

def test_ssim_matrix():
    imgs = [_natural(seed=s) for s in range(3)] + [RasterImage(255 - _natural().pixels)]
    m = ssim_matrix(imgs)
    assert m.shape == (4, 4)
    assert np.allclose(np.diag(m), 1.0)
    assert np.allclose(m, m.T)
    assert m[0, 3] < 0.6

def test_quality_report_of_identical_images():
    img = _natural()
    report = quality_report(img, img)
    assert report.as_dict() == {'mse': 0.0, 'psnr': math.inf, 'ssim': pytest.approx(1.0)}
