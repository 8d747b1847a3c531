import os
import struct
from dataclasses import dataclass

import numpy as np
from PIL import Image

from scripts.errors import DimensionError, DomainError, FormatError
from scripts.io_utils import atomic_write_with

BMP_SUPPORTED_BITS = (8, 24)
BMP_RGB = 0


@dataclass
class RasterImage:
    """Rejilla de píxeles de 8 bits con forma (canales, alto, ancho)."""
    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim == 2:
            pixels = pixels[None, :, :]
        if pixels.ndim != 3 or pixels.shape[0] not in (1, 3):
            raise DimensionError(f"Se esperan 1 o 3 canales (C, H, W), recibido {pixels.shape}")
        if pixels.shape[1] == 0 or pixels.shape[2] == 0:
            raise DomainError("La imagen está vacía")
        if pixels.dtype != np.uint8:
            if pixels.min() < 0 or pixels.max() > 255:
                raise DomainError("Valores de píxel fuera de [0, 255]")
            pixels = pixels.astype(np.uint8)
        self.pixels = pixels

    @property
    def channels(self) -> int:
        return self.pixels.shape[0]

    @property
    def height(self) -> int:
        return self.pixels.shape[1]

    @property
    def width(self) -> int:
        return self.pixels.shape[2]

    @property
    def shape(self):
        return self.pixels.shape

    def to_pil(self) -> Image.Image:
        if self.channels == 1:
            return Image.fromarray(self.pixels[0])
        return Image.fromarray(np.ascontiguousarray(np.transpose(self.pixels, (1, 2, 0))))


def _check_bmp_header(path: str):
    """Sólo BMP sin comprimir de 8 (gris) o 24 bits."""
    with open(path, 'rb') as f:
        header = f.read(34)
    if len(header) < 34 or header[:2] != b'BM':
        raise FormatError(f"Cabecera BMP inválida: {path}")
    bits, compression = struct.unpack_from('<HI', header, 28)
    if bits not in BMP_SUPPORTED_BITS:
        raise FormatError(f"Profundidad BMP no soportada ({bits} bits): {path}")
    if compression != BMP_RGB:
        raise FormatError(f"BMP comprimido no soportado (compresión {compression}): {path}")


def load_image(path: str) -> RasterImage:
    """
    Lee un BMP (24 bits RGB o 8 bits en gris) o un PNG y devuelve un RasterImage.
    Lanza FileNotFoundError si el archivo no existe.
    """
    if not os.path.exists(path):
        raise FileNotFoundError(f"Imagen no encontrada: {path}")
    try:
        with Image.open(path) as im:
            fmt = im.format
            if fmt == 'BMP':
                _check_bmp_header(path)
            elif fmt != 'PNG':
                raise FormatError(f"Formato de imagen no soportado ({fmt}): {path}")
            if im.mode == 'P':
                palette = np.array(im.getpalette()[:768]).reshape(-1, 3)
                gray = bool(np.all(palette[:, 0] == palette[:, 1]) and np.all(palette[:, 1] == palette[:, 2]))
                im = im.convert('L' if gray else 'RGB')
            elif im.mode in ('RGBA', 'LA'):
                im = im.convert('RGB' if im.mode == 'RGBA' else 'L')
            elif im.mode not in ('L', 'RGB'):
                raise FormatError(f"Modo de imagen no soportado ({im.mode}): {path}")
            arr = np.array(im, dtype=np.uint8)
    except FormatError:
        raise
    except (OSError, SyntaxError) as exc:
        raise FormatError(f"No se pudo leer la imagen {path}: {exc}") from exc

    if arr.ndim == 2:
        return RasterImage(arr[None, :, :])
    return RasterImage(np.transpose(arr, (2, 0, 1)))


def save_image(img: RasterImage, path: str):
    """Guarda como BMP (8 bits gris o 24 bits RGB) salvo que la extensión sea .png."""
    fmt = 'PNG' if path.lower().endswith('.png') else 'BMP'
    atomic_write_with(path, lambda f: img.to_pil().save(f, format=fmt))


def list_images(directory: str) -> list:
    """Rutas de los BMP/PNG de un directorio, ordenadas."""
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"Directorio de imágenes no encontrado: {directory}")
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(('.bmp', '.png')))
    return [os.path.join(directory, n) for n in names]
