"""
Imagen cifrada: un cifrado CKKS por píxel y canal, más el contenedor ICHI.
"""
import os
import struct
import time
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from scripts import ckks
from scripts.cache import PIXEL_MAX, PixelCaches, encrypt_pixel
from scripts.ckks import Ciphertext, KeySet, context_for
from scripts.errors import FormatError, KeyMismatchError
from scripts.io_utils import atomic_write
from scripts.load import RasterImage
from scripts.params import CkksParams

logger = logging.getLogger(__name__)

IMAGE_MAGIC = b'ICHI'
IMAGE_VERSION = 1
HEADER = struct.Struct('<4sHIIBB32s')


@dataclass
class CipherImage:
    """cells tiene forma (canales, alto, ancho) y dtype object."""
    params: CkksParams
    cells: np.ndarray
    fingerprint: bytes
    strategy_tag: int = 0
    encrypt_seconds: float = 0.0

    @property
    def channels(self) -> int:
        return self.cells.shape[0]

    @property
    def height(self) -> int:
        return self.cells.shape[1]

    @property
    def width(self) -> int:
        return self.cells.shape[2]

    @property
    def shape(self):
        return self.cells.shape

    @property
    def level(self) -> int:
        return self.cells.flat[0].level

    def with_cells(self, cells: np.ndarray) -> 'CipherImage':
        return CipherImage(self.params, cells, self.fingerprint, self.strategy_tag)


def map_rows(fn: Callable[[int, int], list], channels: int, height: int, workers: int = 1) -> List[list]:
    """Aplica fn(c, y) a cada fila de cada canal; el resultado conserva el orden."""
    rows = [(c, y) for c in range(channels) for y in range(height)]
    if workers <= 1 or len(rows) < 2:
        return [fn(c, y) for c, y in rows]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda cy: fn(*cy), rows))


def grid_from_rows(rows: List[list], channels: int, height: int, width: int) -> np.ndarray:
    cells = np.empty((channels, height, width), dtype=object)
    for i, row in enumerate(rows):
        c, y = divmod(i, height)
        for x, ct in enumerate(row):
            cells[c, y, x] = ct
    return cells


def encrypt_image(img: RasterImage, caches: PixelCaches, keys: KeySet,
                  rng: np.random.Generator, workers: int = 1) -> CipherImage:
    """
    Cifra píxel a píxel con la estrategia de `caches`. Cada fila usa su propio
    generador derivado de `rng`, así que el resultado no depende de `workers`.
    """
    channels, height, width = img.shape
    seeds = np.random.SeedSequence(int(rng.integers(2 ** 63))).spawn(channels * height)

    def encrypt_row(c: int, y: int) -> list:
        row_rng = np.random.default_rng(seeds[c * height + y])
        return [encrypt_pixel(int(p), caches, keys, row_rng) for p in img.pixels[c, y]]

    start = time.perf_counter()
    rows = map_rows(encrypt_row, channels, height, workers)
    elapsed = time.perf_counter() - start
    logger.info("Imagen %dx%dx%d cifrada con '%s' en %.3f s",
                width, height, channels, caches.strategy.tag, elapsed)
    return CipherImage(keys.params, grid_from_rows(rows, channels, height, width), keys.fingerprint,
                       caches.strategy.code, elapsed)


def decrypt_pixel(ct: Ciphertext, keys: KeySet) -> int:
    value = ckks.round_half_away(ckks.decrypt_value(ct, keys))
    return min(max(value, 0), PIXEL_MAX)


def decrypt_image(cimg: CipherImage, keys: KeySet, workers: int = 1) -> RasterImage:
    """Descifra, redondea alejándose de cero y recorta a [0, 255]."""
    if cimg.fingerprint != keys.fingerprint:
        raise KeyMismatchError("La huella de la imagen cifrada no coincide con las claves")

    def decrypt_row(c: int, y: int) -> list:
        return [decrypt_pixel(ct, keys) for ct in cimg.cells[c, y]]

    rows = map_rows(decrypt_row, cimg.channels, cimg.height, workers)
    pixels = np.array(rows, dtype=np.uint8).reshape(cimg.shape)
    return RasterImage(pixels)


def decrypt_values(cimg: CipherImage, keys: KeySet, workers: int = 1) -> np.ndarray:
    """Valores descifrados sin redondear ni recortar, forma (C, H, W)."""
    if cimg.fingerprint != keys.fingerprint:
        raise KeyMismatchError("La huella de la imagen cifrada no coincide con las claves")
    rows = map_rows(lambda c, y: [ckks.decrypt_value(ct, keys) for ct in cimg.cells[c, y]],
                    cimg.channels, cimg.height, workers)
    return np.array(rows, dtype=np.float64).reshape(cimg.shape)


def encode_cipher_image(cimg: CipherImage) -> bytes:
    header = HEADER.pack(IMAGE_MAGIC, IMAGE_VERSION, cimg.width, cimg.height,
                         cimg.channels, cimg.strategy_tag, cimg.fingerprint)
    return header + b''.join(ct.to_bytes() for ct in cimg.cells.ravel())


def serialize_cipher_image(cimg: CipherImage, path: str):
    atomic_write(path, encode_cipher_image(cimg))
    logger.info("Imagen cifrada guardada en %s", path)


def decode_cipher_image(buf: bytes, params: CkksParams, fingerprint: Optional[bytes] = None) -> CipherImage:
    if len(buf) < HEADER.size:
        raise FormatError("Fichero ICHI truncado (cabecera)")
    magic, version, width, height, channels, tag, stored_fp = HEADER.unpack_from(buf, 0)
    if magic != IMAGE_MAGIC:
        raise FormatError(f"Magic inválido {magic!r}, se esperaba {IMAGE_MAGIC!r}")
    if version != IMAGE_VERSION:
        raise FormatError(f"Versión ICHI no soportada: {version}")
    if channels not in (1, 3) or width == 0 or height == 0:
        raise FormatError(f"Dimensiones ICHI inválidas: {width}x{height}x{channels}")
    if fingerprint is not None and stored_fp != fingerprint:
        raise KeyMismatchError("La huella de la imagen cifrada no coincide con las claves")

    ctx = context_for(params)
    offset = HEADER.size
    flat = []
    for _ in range(width * height * channels):
        ct, offset = Ciphertext.from_bytes(ctx, buf, offset)
        flat.append(ct)
    if offset != len(buf):
        raise FormatError(f"Bytes sobrantes al final del fichero ICHI ({len(buf) - offset})")
    if len({ct.level for ct in flat}) != 1:
        raise FormatError("Las celdas de la imagen cifrada tienen niveles distintos")

    cells = np.empty(len(flat), dtype=object)
    cells[:] = flat
    return CipherImage(params, cells.reshape(channels, height, width), stored_fp, tag)


def deserialize_cipher_image(path: str, params: CkksParams, fingerprint: Optional[bytes] = None) -> CipherImage:
    """Necesita los parámetros (N y la cadena) para dimensionar las celdas."""
    if not os.path.exists(path):
        raise FileNotFoundError(f"Imagen cifrada no encontrada: {path}")
    with open(path, 'rb') as f:
        return decode_cipher_image(f.read(), params, fingerprint)
