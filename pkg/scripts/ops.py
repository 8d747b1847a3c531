"""
Operaciones sobre imágenes cifradas: filtro de media, brillo, comparación
L1/L2 y marca de agua. Sólo las funciones finalize_* y watermark_detect
trabajan con datos descifrados.
"""
import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from scripts import ckks
from scripts.cipher_image import CipherImage, grid_from_rows, map_rows
from scripts.ckks import Ciphertext, KeySet
from scripts.errors import DimensionError, DomainError, LevelExhaustedError
from scripts.load import RasterImage

logger = logging.getLogger(__name__)

L1_MODE = 'l1-client-side'
L2_MODE = 'l2-encrypted'


def mean_filter(cimg: CipherImage, n: int = 3, workers: int = 1) -> CipherImage:
    """
    Media n×n con bordes replicados: suma homomórfica del vecindario, una
    multiplicación por 1/n² y un reescalado. Consume exactamente un nivel.
    """
    if n < 1 or n % 2 == 0:
        raise DomainError(f"La ventana del filtro debe ser impar y positiva, recibido {n}")
    if cimg.level < 1:
        raise LevelExhaustedError("El filtro de media necesita al menos un nivel libre")
    first = cimg.cells.flat[0]
    weight = ckks.encode_scalar(1.0 / (n * n), cimg.params, first.level, first.scale)
    half = n // 2
    height, width = cimg.height, cimg.width

    def filter_row(c: int, y: int) -> list:
        ys = np.clip(np.arange(y - half, y + half + 1), 0, height - 1)
        out = []
        for x in range(width):
            xs = np.clip(np.arange(x - half, x + half + 1), 0, width - 1)
            acc = None
            for yy in ys:
                for xx in xs:
                    ct = cimg.cells[c, yy, xx]
                    acc = ct if acc is None else ckks.add(acc, ct)
            out.append(ckks.rescale(ckks.mul_plain(acc, weight)))
        return out

    rows = map_rows(filter_row, cimg.channels, height, workers)
    logger.info("Filtro de media %dx%d aplicado sobre %dx%d", n, n, width, height)
    return cimg.with_cells(grid_from_rows(rows, *cimg.shape))


def brighten(cimg: CipherImage, delta: float = 50.0) -> CipherImage:
    """Suma `delta` a cada celda sin consumir nivel."""
    first = cimg.cells.flat[0]
    shift = ckks.encode_scalar(delta, cimg.params, first.level, first.scale)
    cells = np.empty(cimg.shape, dtype=object)
    for idx, ct in np.ndenumerate(cimg.cells):
        cells[idx] = ckks.add_plain(ct, shift)
    return cimg.with_cells(cells)


@dataclass
class MatchResult:
    mode: str
    encrypted_distance: Optional[Ciphertext] = None
    diff_plane: Optional[np.ndarray] = None
    finalized_distance: Optional[float] = None


def _check_comparable(a: CipherImage, b: CipherImage):
    if a.shape != b.shape:
        raise DimensionError(f"Formas distintas: {a.shape} vs {b.shape}")
    if a.fingerprint != b.fingerprint:
        raise DimensionError("Las imágenes se cifraron con parámetros o claves distintos")


def match_l1(a: CipherImage, b: CipherImage) -> MatchResult:
    _check_comparable(a, b)
    plane = np.empty(a.shape, dtype=object)
    for idx, ct in np.ndenumerate(a.cells):
        plane[idx] = ckks.sub(ct, b.cells[idx])
    return MatchResult(mode=L1_MODE, diff_plane=plane)


def finalize_l1(result: MatchResult, keys: KeySet) -> float:
    """Descifra cada diferencia y suma los valores absolutos en el cliente."""
    if result.diff_plane is None:
        raise DomainError("El resultado no contiene el plano de diferencias L1")
    total = sum(abs(ckks.decrypt_value(ct, keys)) for ct in result.diff_plane.ravel())
    result.finalized_distance = float(total)
    return result.finalized_distance


def match_l2(a: CipherImage, b: CipherImage, keys: KeySet, workers: int = 1) -> MatchResult:
    """
    Σ(a - b)² cifrado: cuadrados de grado 2 sumados por filas, una sola
    relinealización y un reescalado al final. De `keys` sólo se usa la
    clave de evaluación.
    """
    _check_comparable(a, b)
    if a.level < 1:
        raise LevelExhaustedError("La distancia L2 necesita al menos un nivel libre")

    def square_row(c: int, y: int) -> list:
        acc = None
        for x in range(a.width):
            d = ckks.sub(a.cells[c, y, x], b.cells[c, y, x])
            sq = ckks.mul(d, d)
            acc = sq if acc is None else ckks.add(acc, sq)
        return [acc]

    partials = [row[0] for row in map_rows(square_row, a.channels, a.height, workers)]
    total = partials[0]
    for part in partials[1:]:
        total = ckks.add(total, part)
    total = ckks.rescale(ckks.relinearize(total, keys))
    return MatchResult(mode=L2_MODE, encrypted_distance=total)


def finalize_l2(result: MatchResult, keys: KeySet) -> float:
    if result.encrypted_distance is None:
        raise DomainError("El resultado no contiene la distancia L2 cifrada")
    result.finalized_distance = ckks.decrypt_value(result.encrypted_distance, keys)
    return result.finalized_distance


@dataclass(frozen=True)
class WatermarkSpec:
    """x es la columna e y la fila. threshold por defecto = value / 2."""
    x: int
    y: int
    channel: int = 0
    value: float = 5.0
    threshold: Optional[float] = None

    def __post_init__(self):
        if self.value <= 0:
            raise DomainError(f"El valor de la marca debe ser positivo, recibido {self.value}")
        if self.threshold is None:
            object.__setattr__(self, 'threshold', self.value / 2)
        if not 0 < self.threshold <= self.value:
            raise DomainError(f"Umbral fuera de (0, {self.value}]: {self.threshold}")


def watermark_embed(cimg: CipherImage, spec: WatermarkSpec) -> CipherImage:
    """Suma spec.value en una única celda; el resto se conserva tal cual."""
    if not (0 <= spec.x < cimg.width and 0 <= spec.y < cimg.height and 0 <= spec.channel < cimg.channels):
        raise DomainError(f"Posición de marca fuera de la imagen: ({spec.x}, {spec.y}, canal {spec.channel})")
    cells = cimg.cells.copy()
    target = cells[spec.channel, spec.y, spec.x]
    mark = ckks.encode_scalar(spec.value, cimg.params, target.level, target.scale)
    cells[spec.channel, spec.y, spec.x] = ckks.add_plain(target, mark)
    logger.info("Marca de agua %.2f en (%d, %d)", spec.value, spec.x, spec.y)
    return cimg.with_cells(cells)


def watermark_detect(original: RasterImage, decrypted: RasterImage, threshold: float) -> np.ndarray:
    """Máscara (alto, ancho): True donde |a - b| >= threshold en algún canal."""
    if original.shape != decrypted.shape:
        raise DimensionError(f"Formas distintas: {original.shape} vs {decrypted.shape}")
    diff = np.abs(original.pixels.astype(np.int16) - decrypted.pixels.astype(np.int16))
    return np.any(diff >= threshold, axis=0)


def mask_to_image(mask: np.ndarray) -> RasterImage:
    return RasterImage(np.where(mask, 255, 0).astype(np.uint8)[None, :, :])
