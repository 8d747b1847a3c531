import os
import math
import struct
import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import yaml
from sympy import isprime

from scripts.errors import ParameterError

logger = logging.getLogger(__name__)

PARAMS_YML = os.path.join(os.path.dirname(__file__), 'params.yml')
PRESET_ALIASES = {'toy': 'toy_insecure'}

DEFAULT_POOL_SIZE = 1024
POOL_SIZE_ENV = 'ICHEETAH_POOL_SIZE'
WORKERS_ENV = 'ICHEETAH_WORKERS'


@dataclass(frozen=True)
class CkksParams:
    """
    Parámetros del esquema: grado del anillo N, cadena de primos q0..qL,
    log2 del factor de escala Δ, desviación del ruido σ y nivel de seguridad λ
    (sólo informativo).
    """
    ring_degree: int = 4096
    primes: Tuple[int, ...] = ()
    log_scale: int = 40
    noise_std: float = 3.2
    security_level: int = 128
    name: str = 'custom'

    def __post_init__(self):
        object.__setattr__(self, 'primes', tuple(int(q) for q in self.primes))
        self.validate()

    def validate(self):
        n = self.ring_degree
        if n < 8 or n & (n - 1) != 0:
            raise ParameterError(f"N debe ser potencia de dos y >= 8, recibido {n}")
        if not self.primes:
            raise ParameterError("La cadena de módulos está vacía")
        if len(set(self.primes)) != len(self.primes):
            raise ParameterError("Los primos de la cadena deben ser distintos")
        for q in self.primes:
            if q % (2 * n) != 1:
                raise ParameterError(f"El primo {q} no es ≡ 1 (mod 2N={2 * n})")
            if q.bit_length() > 62:
                raise ParameterError(f"El primo {q} no cabe en palabras de 62 bits")
            if self.delta >= q:
                raise ParameterError(f"Δ=2^{self.log_scale} debe ser menor que cada primo ({q})")
        if self.modulus() < self.delta ** 2 * 2 ** 16:
            raise ParameterError("El producto de la cadena es menor que Δ²·2^16")
        if self.noise_std <= 0:
            raise ParameterError("σ debe ser positivo")

    @property
    def delta(self) -> int:
        return 1 << self.log_scale

    @property
    def max_level(self) -> int:
        return len(self.primes) - 1

    @property
    def prime_bits(self) -> int:
        return max(q.bit_length() for q in self.primes)

    def modulus(self, level: Optional[int] = None) -> int:
        """Producto de los primos activos q0..q_level."""
        level = self.max_level if level is None else level
        return math.prod(self.primes[:level + 1])

    def packed(self) -> bytes:
        """Campos de parámetros en el orden de la cabecera ICHK."""
        return (
            struct.pack('<IB', self.ring_degree, len(self.primes))
            + struct.pack(f'<{len(self.primes)}Q', *self.primes)
            + struct.pack('<Bd', self.log_scale, self.noise_std)
        )

    def summary(self) -> str:
        bits = '+'.join(str(q.bit_length()) for q in self.primes)
        return (f"{self.name}: N={self.ring_degree}, cadena={bits} bits "
                f"(log2 Q≈{math.log2(self.modulus()):.1f}), Δ=2^{self.log_scale}, "
                f"σ={self.noise_std}, λ={self.security_level}")


def generate_ntt_primes(ring_degree: int, bits: int, count: int,
                        exclude: Sequence[int] = ()) -> list:
    """
    Busca hacia abajo desde 2^bits los `count` primos mayores ≡ 1 (mod 2N).
    """
    step = 2 * ring_degree
    q = (1 << bits) - ((1 << bits) % step) + 1
    if q >= 1 << bits:
        q -= step
    found = []
    while len(found) < count:
        if q < 1 << (bits - 1):
            raise ParameterError(f"No hay suficientes primos de {bits} bits ≡ 1 (mod {step})")
        if q not in exclude and isprime(q):
            found.append(q)
        q -= step
    return found


def load_params(preset: str = 'default', path: Optional[str] = None) -> CkksParams:
    """
    Lee params.yml y devuelve el CkksParams del preset pedido.
    Un preset puede traer `primes` explícitos o `prime_bits` para generarlos.
    """
    path = path or PARAMS_YML
    if not os.path.exists(path):
        raise FileNotFoundError(f"Fichero de parámetros no encontrado: {path}")
    with open(path, 'r', encoding='utf-8') as f:
        content = yaml.safe_load(f) or {}
    presets = content.get('presets')
    if not isinstance(presets, dict):
        raise ParameterError("params.yml debe tener sección 'presets'")

    name = PRESET_ALIASES.get(preset, preset)
    cfg = presets.get(name)
    if cfg is None:
        raise ParameterError(f"Preset desconocido: {preset} (disponibles: {', '.join(presets)})")

    n = int(cfg['ring_degree'])
    primes = cfg.get('primes')
    if primes is None:
        primes = []
        for bits in cfg.get('prime_bits', []):
            primes += generate_ntt_primes(n, int(bits), 1, exclude=primes)
        logger.info("Primos generados para %s: %s", name, primes)

    return CkksParams(
        ring_degree=n,
        primes=tuple(primes),
        log_scale=int(cfg.get('log_scale', 40)),
        noise_std=float(cfg.get('noise_std', 3.2)),
        security_level=int(cfg.get('security_level', 128)),
        name=name,
    )


def resolve_pool_size(flag: Optional[int] = None) -> int:
    value = flag if flag is not None else os.environ.get(POOL_SIZE_ENV, DEFAULT_POOL_SIZE)
    try:
        value = int(value)
    except (TypeError, ValueError):
        raise ParameterError(f"{POOL_SIZE_ENV} no es un entero: {value!r}")
    if value < 1:
        raise ParameterError(f"El tamaño del pool debe ser >= 1, recibido {value}")
    return value


def resolve_workers(flag: Optional[int] = None) -> int:
    value = flag if flag is not None else os.environ.get(WORKERS_ENV, os.cpu_count() or 1)
    try:
        value = int(value)
    except (TypeError, ValueError):
        raise ParameterError(f"{WORKERS_ENV} no es un entero: {value!r}")
    return max(1, value)
