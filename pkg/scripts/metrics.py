import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from scripts.errors import DimensionError, DomainError
from scripts.load import RasterImage

PIXEL_PEAK = 255.0
SSIM_C1 = (0.01 * PIXEL_PEAK) ** 2
SSIM_C2 = (0.03 * PIXEL_PEAK) ** 2


@dataclass(frozen=True)
class QualityReport:
    mse: float
    psnr: float
    ssim: float

    def as_dict(self) -> dict:
        return {'mse': self.mse, 'psnr': self.psnr, 'ssim': self.ssim}


def _pair(a: RasterImage, b: RasterImage):
    if a.shape != b.shape:
        raise DimensionError(f"Formas distintas: {a.shape} vs {b.shape}")
    return a.pixels.astype(np.float64), b.pixels.astype(np.float64)


def mse(a: RasterImage, b: RasterImage) -> float:
    """
    Error cuadrático medio sobre todos los píxeles y canales.
    """
    x, y = _pair(a, b)
    return float(np.mean((x - y) ** 2))


def psnr(mse_value: float, max_i: float = PIXEL_PEAK) -> float:
    """
    10·log10(max_i² / mse) en dB. Devuelve math.inf cuando mse = 0.
    """
    if mse_value < 0:
        raise DomainError(f"El MSE no puede ser negativo: {mse_value}")
    if mse_value == 0:
        return math.inf
    return 10 * math.log10(max_i ** 2 / mse_value)


def _ssim_plane(x: np.ndarray, y: np.ndarray) -> float:
    mu_x, mu_y = x.mean(), y.mean()
    var_x, var_y = x.var(), y.var()
    cov = ((x - mu_x) * (y - mu_y)).mean()
    num = (2 * mu_x * mu_y + SSIM_C1) * (2 * cov + SSIM_C2)
    den = (mu_x ** 2 + mu_y ** 2 + SSIM_C1) * (var_x + var_y + SSIM_C2)
    return float(num / den)


def ssim(a: RasterImage, b: RasterImage) -> float:
    """
    SSIM global (una sola ventana: la imagen entera) promediado por canal.
    """
    x, y = _pair(a, b)
    return float(np.mean([_ssim_plane(x[c], y[c]) for c in range(x.shape[0])]))


def ssim_matrix(images: Sequence[RasterImage]) -> np.ndarray:
    """Matriz simétrica de SSIM por pares, con 1.0 en la diagonal."""
    n = len(images)
    out = np.ones((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            out[i, j] = out[j, i] = ssim(images[i], images[j])
    return out


def quality_report(original: RasterImage, candidate: RasterImage) -> QualityReport:
    m = mse(original, candidate)
    return QualityReport(mse=m, psnr=psnr(m), ssim=ssim(original, candidate))
