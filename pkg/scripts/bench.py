"""
Comparativa de tiempos de cifrado por estrategia de caché y tamaño de imagen.

La construcción de cachés se mide aparte del cifrado por imagen. Las imágenes
se cifran por bandas de filas para acotar la memoria: una imagen 64×64 con
los parámetros por defecto ya ocupa del orden de 800 MB cifrada.
"""
import os
import math
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from scripts import ckks
from scripts.cache import STRATEGY_TAGS, CacheStrategy, PixelCaches, build_caches
from scripts.cipher_image import decrypt_image, encrypt_image
from scripts.ckks import KeySet
from scripts.errors import ParameterError
from scripts.io_utils import save_csv, save_json
from scripts.load import RasterImage
from scripts.metrics import mse, psnr, ssim_matrix

logger = logging.getLogger(__name__)

CSV_COLUMNS = ['strategy', 'size', 'reps', 'median_ms', 'speedup', 'cache_build_ms', 'mse', 'psnr']
BATCH_COLUMNS = ['image', 'width', 'height', 'channels', 'baseline_ms', 'full_ms', 'speedup', 'mse', 'psnr']
ROW_ORDER = ('none', 'radix', 'radix-norand', 'scan', 'full')
LARGE_SIZE = 1024


@dataclass(frozen=True)
class BenchConfig:
    sizes: Tuple[int, ...] = (8, 64, 128, 256)
    strategies: Tuple[str, ...] = ('none', 'radix', 'scan', 'full')
    repetitions: int = 3
    radix: int = 2
    pool_size: int = 1024
    workers: int = 1
    seed: int = 0
    channels: int = 1
    include_radix_norand: bool = False
    band_cells: int = 1024
    allow_large: bool = False

    def __post_init__(self):
        if self.repetitions < 1:
            raise ParameterError("repetitions debe ser >= 1")
        if not self.sizes:
            raise ParameterError("La lista de tamaños no puede estar vacía")
        if any(s < 1 for s in self.sizes):
            raise ParameterError(f"Tamaños inválidos: {self.sizes}")
        if not self.allow_large and max(self.sizes) >= LARGE_SIZE:
            raise ParameterError(f"Tamaños >= {LARGE_SIZE} requieren --allow-large")
        unknown = set(self.strategies) - set(STRATEGY_TAGS)
        if unknown or not self.strategies:
            raise ParameterError(f"Estrategias desconocidas: {sorted(unknown)}")
        if self.channels not in (1, 3):
            raise ParameterError("channels debe ser 1 o 3")
        if self.band_cells < 1:
            raise ParameterError("band_cells debe ser >= 1")

    @property
    def row_labels(self) -> List[str]:
        labels = set(self.strategies)
        if self.include_radix_norand and 'radix' in labels:
            labels.add('radix-norand')
        return [label for label in ROW_ORDER if label in labels]

    def strategy_for(self, label: str) -> CacheStrategy:
        tag = 'radix' if label == 'radix-norand' else label
        return CacheStrategy(tag=tag, radix=self.radix, pool_size=self.pool_size,
                             randomness=label != 'radix-norand')


@dataclass
class BenchReport:
    rows: pd.DataFrame
    metadata: Dict = field(default_factory=dict)

    def speedup(self, strategy: str, size: int) -> float:
        sel = self.rows[(self.rows['strategy'] == strategy) & (self.rows['size'] == size)]
        return float(sel['speedup'].iloc[0])


def synthesize_image(size: int, channels: int, rng: np.random.Generator) -> RasterImage:
    """
    Ruido uniforme con parches de color constante encima, para que haya
    valores repetidos como en una imagen natural.
    """
    pixels = rng.integers(0, 256, size=(channels, size, size), dtype=np.uint8)
    for _ in range(max(1, size // 4)):
        h, w = rng.integers(1, max(2, size // 3), size=2)
        y, x = rng.integers(0, size, size=2)
        pixels[:, y:y + h, x:x + w] = rng.integers(0, 256, size=(channels, 1, 1), dtype=np.uint8)
    return RasterImage(pixels)


def encrypt_banded(img: RasterImage, caches: PixelCaches, keys: KeySet, rng: np.random.Generator,
                   workers: int = 1, band_cells: int = 1024,
                   decrypt: bool = False) -> Tuple[float, Optional[RasterImage]]:
    """
    Cifra la imagen por bandas de filas. Devuelve la suma de los tiempos de
    cifrado y, si se pide, la imagen descifrada completa.
    """
    band_rows = max(1, band_cells // (img.width * img.channels))
    total, decoded = 0.0, []
    for r0 in range(0, img.height, band_rows):
        band = RasterImage(img.pixels[:, r0:r0 + band_rows, :])
        cimg = encrypt_image(band, caches, keys, rng, workers)
        total += cimg.encrypt_seconds
        if decrypt:
            decoded.append(decrypt_image(cimg, keys, workers).pixels)
        del cimg
    restored = RasterImage(np.concatenate(decoded, axis=1)) if decrypt else None
    return total, restored


def _workloads(cfg: BenchConfig, rng: np.random.Generator,
               images: Optional[Sequence[RasterImage]]) -> List[Tuple[int, RasterImage]]:
    if images:
        return [(img.width, img) for img in images]
    return [(s, synthesize_image(s, cfg.channels, rng)) for s in cfg.sizes]


def run_bench(cfg: BenchConfig, keys: KeySet, images: Optional[Sequence[RasterImage]] = None) -> BenchReport:
    """
    Mediana de `repetitions` cifrados por (estrategia, tamaño). Las cachés
    radix y full se construyen una vez; la de escaneo, una por imagen.
    """
    rng = np.random.default_rng(cfg.seed)
    workloads = _workloads(cfg, rng, images)
    built: Dict[str, PixelCaches] = {}
    records = []

    for size, img in workloads:
        baseline_ms = None
        for label in cfg.row_labels:
            strategy = cfg.strategy_for(label)
            if strategy.tag == 'scan' or label not in built:
                caches = build_caches(strategy, keys, rng, image=img, workers=cfg.workers)
                if strategy.tag != 'scan':
                    built[label] = caches
            else:
                caches = built[label]

            times, restored = [], None
            for rep in range(cfg.repetitions):
                seconds, decoded = encrypt_banded(img, caches, keys, rng, cfg.workers,
                                                  cfg.band_cells, decrypt=rep == 0)
                times.append(seconds)
                restored = decoded if decoded is not None else restored
            median_ms = float(np.median(times)) * 1000
            if label == 'none':
                baseline_ms = median_ms
            m = mse(img, restored)
            records.append({
                'strategy': label,
                'size': size,
                'reps': cfg.repetitions,
                'median_ms': round(median_ms, 3),
                'speedup': round(baseline_ms / median_ms, 3) if baseline_ms else math.nan,
                'cache_build_ms': round(caches.build_seconds * 1000, 3),
                'mse': m,
                'psnr': psnr(m),
            })
            logger.info("bench %s %dx%d: %.1f ms (mediana de %d)", label, size, size,
                        median_ms, cfg.repetitions)

    metadata = {
        'params': keys.params.name,
        'ring_degree': keys.params.ring_degree,
        'log_scale': keys.params.log_scale,
        'workers': cfg.workers,
        'seed': cfg.seed,
        'repetitions': cfg.repetitions,
        'pool_size': cfg.pool_size,
        'radix': cfg.radix,
        'counters': ckks.counters.snapshot(),
    }
    return BenchReport(pd.DataFrame(records, columns=CSV_COLUMNS), metadata)


def run_batch_bench(images: Dict[str, RasterImage], keys: KeySet, cfg: BenchConfig) -> BenchReport:
    """
    Para cada imagen: cifrado base frente a caché completa, aceleración y MSE
    de ida y vuelta; en los metadatos, el rango de SSIM entre pares.
    """
    rng = np.random.default_rng(cfg.seed)
    full = build_caches(cfg.strategy_for('full'), keys, rng, workers=cfg.workers)
    baseline = PixelCaches(strategy=cfg.strategy_for('none'))
    records = []
    for name, img in images.items():
        medians = {}
        restored = None
        for label, caches in (('baseline', baseline), ('full', full)):
            times = []
            for rep in range(cfg.repetitions):
                seconds, decoded = encrypt_banded(img, caches, keys, rng, cfg.workers, cfg.band_cells,
                                                  decrypt=label == 'full' and rep == 0)
                times.append(seconds)
                restored = decoded if decoded is not None else restored
            medians[label] = float(np.median(times)) * 1000
        m = mse(img, restored)
        records.append({
            'image': name,
            'width': img.width,
            'height': img.height,
            'channels': img.channels,
            'baseline_ms': round(medians['baseline'], 3),
            'full_ms': round(medians['full'], 3),
            'speedup': round(medians['baseline'] / medians['full'], 3),
            'mse': m,
            'psnr': psnr(m),
        })
        logger.info("batch %s: x%.2f", name, medians['baseline'] / medians['full'])

    rows = pd.DataFrame(records, columns=BATCH_COLUMNS)
    metadata = {'params': keys.params.name, 'workers': cfg.workers, 'seed': cfg.seed,
                'cache_build_ms': round(full.build_seconds * 1000, 3)}
    if not rows.empty:
        metadata['mean_speedup'] = float(rows['speedup'].mean())
        metadata['mean_mse'] = float(rows['mse'].mean())
    same_shape = len({img.shape for img in images.values()}) == 1
    if len(images) > 1 and same_shape:
        matrix = ssim_matrix(list(images.values()))
        off = matrix[~np.eye(len(images), dtype=bool)]
        metadata['ssim_min'] = float(off.min())
        metadata['ssim_max'] = float(off.max())
    return BenchReport(rows, metadata)


def report_emit(report: BenchReport, fmt: str, path: str, rule_results: Optional[pd.DataFrame] = None,
                summary: Optional[dict] = None):
    """csv: tabla con columnas fijas; markdown: la misma tabla vía plantilla; json: metadatos."""
    if fmt == 'csv':
        save_csv(report.rows, path)
    elif fmt == 'markdown':
        from scripts.render_report import render_markdown
        render_markdown(report, path, rule_results=rule_results, summary=summary)
    elif fmt == 'json':
        save_json({'metadata': report.metadata, 'summary': summary or {}}, path)
    else:
        raise ParameterError(f"Formato de informe desconocido: {fmt}")
    logger.info("Informe %s escrito en %s", fmt, os.path.abspath(path))
