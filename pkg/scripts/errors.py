"""
Excepciones del paquete. Cada clase lleva el código de salida que usa la CLI.
"""


class PixelHEError(Exception):
    exit_code = 1


class ParameterError(PixelHEError, ValueError):
    exit_code = 2


class DomainError(PixelHEError, ValueError):
    exit_code = 2


class DimensionError(PixelHEError, ValueError):
    exit_code = 2


class EncodingOverflowError(PixelHEError, ValueError):
    exit_code = 2


class LevelError(PixelHEError):
    exit_code = 2


class LevelExhaustedError(LevelError):
    pass


class ScaleError(PixelHEError):
    exit_code = 2


class UnsupportedError(PixelHEError):
    exit_code = 2


class PoolError(PixelHEError):
    exit_code = 2


class CacheMissError(PixelHEError, KeyError):
    exit_code = 2

    def __init__(self, value: int):
        super().__init__(value)
        self.value = value

    def __str__(self):
        return f"Valor de pixel {self.value} no está en la caché de escaneo (usa --fallback-fresh)"


class FormatError(PixelHEError):
    exit_code = 3


class KeyMismatchError(PixelHEError):
    exit_code = 4


class QualityGateError(PixelHEError):
    exit_code = 5
