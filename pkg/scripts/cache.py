"""
Cachés de cifrados por píxel: radix (potencias r^i), escaneo (valores
observados en la imagen) y completa (los 256 valores), más el pool de ceros
que aleatoriza cada cifrado servido desde caché.
"""
import os
import math
import struct
import logging
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np

from scripts import ckks
from scripts.ckks import Ciphertext, KeySet
from scripts.errors import (
    CacheMissError,
    DomainError,
    FormatError,
    KeyMismatchError,
    ParameterError,
    PoolError,
    UnsupportedError,
)
from scripts.io_utils import atomic_write
from scripts.params import DEFAULT_POOL_SIZE, CkksParams

logger = logging.getLogger(__name__)

PIXEL_MAX = 255
# multiconjuntos distintos de ceros exigidos: con 10^5 cifrados de un mismo
# valor se esperan ~n²/(2·10^12) = 0.005 colisiones
MIN_ZERO_COMBINATIONS = 10 ** 12
MAX_ZERO_MIX = 16
STRATEGY_TAGS = {'none': 0, 'radix': 1, 'scan': 2, 'full': 3}


@dataclass(frozen=True)
class CacheStrategy:
    """
    tag: none | radix | scan | full.
    zero_mix: cuántos ceros del pool (cada uno por ±X^j aleatorio) se suman
    a cada cifrado servido desde caché. None: el mínimo que da
    MIN_ZERO_COMBINATIONS para el tamaño del pool y el grado del anillo.
    """
    tag: str = 'full'
    radix: int = 2
    pool_size: int = DEFAULT_POOL_SIZE
    randomness: bool = True
    zero_mix: Optional[int] = None
    radix_zero_pool: bool = False
    top_k: Optional[int] = None
    fallback_fresh: bool = False

    def __post_init__(self):
        if self.tag not in STRATEGY_TAGS:
            raise ParameterError(f"Estrategia desconocida: {self.tag} (usa {', '.join(STRATEGY_TAGS)})")
        if self.tag == 'none':
            return
        if self.radix < 2:
            raise ParameterError(f"La base radix debe ser >= 2, recibido {self.radix}")
        if self.pool_size < 1:
            raise ParameterError(f"El pool de ceros debe tener >= 1 elemento, recibido {self.pool_size}")
        if self.zero_mix is not None and self.zero_mix < 1:
            raise ParameterError("zero_mix debe ser >= 1")

    @property
    def code(self) -> int:
        return STRATEGY_TAGS[self.tag]

    @property
    def uses_pool(self) -> bool:
        if not self.randomness:
            return False
        return self.tag in ('scan', 'full') or (self.tag == 'radix' and self.radix_zero_pool)


@dataclass(frozen=True)
class RadixCache:
    radix: int
    powers: Tuple[Ciphertext, ...]


@dataclass(frozen=True)
class ValueCache:
    entries: Dict[int, Ciphertext]

    @property
    def coverage(self) -> frozenset:
        return frozenset(self.entries)


@dataclass
class ZeroPool:
    """Ceros precalculados. Los elementos no cambian; sólo avanza el contador de extracciones."""
    zeros: Tuple[Ciphertext, ...]
    draw_counter: int = 0
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __len__(self):
        return len(self.zeros)

    def _record(self):
        with self._lock:
            self.draw_counter += 1


@dataclass
class PixelCaches:
    """Todo lo que necesita encrypt_pixel para una estrategia."""
    strategy: CacheStrategy
    radix: Optional[RadixCache] = None
    values: Optional[ValueCache] = None
    pool: Optional[ZeroPool] = None
    build_seconds: float = 0.0


def radix_decompose(p: int, r: int) -> List[int]:
    """Dígitos de p en base r, el menos significativo primero."""
    if not 0 <= p <= PIXEL_MAX:
        raise DomainError(f"Valor de píxel fuera de [0, 255]: {p}")
    if r < 2:
        raise DomainError(f"Base inválida: {r}")
    if p == 0:
        return [0]
    digits = []
    while p:
        p, d = divmod(p, r)
        digits.append(d)
    return digits


def radix_length(r: int) -> int:
    """⌊log_r 255⌋ + 1, calculado en enteros."""
    k, power = 0, 1
    while power * r <= PIXEL_MAX:
        power *= r
        k += 1
    return k + 1


def _encrypt_many(values, keys: KeySet, rng: np.random.Generator, workers: int = 1) -> List[Ciphertext]:
    values = list(values)
    if workers <= 1 or len(values) < 2:
        return [ckks.encrypt_value(v, keys, rng) for v in values]
    children = np.random.SeedSequence(int(rng.integers(2 ** 63))).spawn(len(values))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(
            lambda item: ckks.encrypt_value(item[0], keys, np.random.default_rng(item[1])),
            zip(values, children)))


def build_zero_pool(keys: KeySet, size: int, rng: np.random.Generator, workers: int = 1) -> ZeroPool:
    if size < 1:
        raise PoolError("El pool de ceros no puede estar vacío")
    return ZeroPool(tuple(_encrypt_many([0] * size, keys, rng, workers)))


def build_radix_cache(keys: KeySet, r: int, rng: np.random.Generator) -> RadixCache:
    powers = [r ** i for i in range(radix_length(r))]
    logger.info("Caché radix r=%d: %d potencias", r, len(powers))
    return RadixCache(radix=r, powers=tuple(_encrypt_many(powers, keys, rng)))


def build_scan_cache(image, keys: KeySet, rng: np.random.Generator,
                     top_k: Optional[int] = None, workers: int = 1) -> ValueCache:
    """
    Cachea los valores observados en la imagen (todos por defecto; con top_k,
    sólo los k más frecuentes).
    """
    pixels = np.asarray(image.pixels)
    if pixels.size == 0:
        raise DomainError("La imagen a escanear está vacía")
    counts = np.bincount(pixels.ravel(), minlength=PIXEL_MAX + 1)
    observed = np.flatnonzero(counts)
    if top_k is not None:
        observed = sorted(observed, key=lambda v: (-counts[v], v))[:top_k]
    observed = sorted(int(v) for v in observed)
    logger.info("Caché de escaneo: %d valores distintos", len(observed))
    return ValueCache(dict(zip(observed, _encrypt_many(observed, keys, rng, workers))))


def build_full_cache(keys: KeySet, rng: np.random.Generator, workers: int = 1) -> ValueCache:
    """Los 256 valores posibles. Determinista con semilla fija sólo con workers=1."""
    values = list(range(PIXEL_MAX + 1))
    return ValueCache(dict(zip(values, _encrypt_many(values, keys, rng, workers))))


def build_caches(strategy: CacheStrategy, keys: KeySet, rng: np.random.Generator,
                 image=None, workers: int = 1) -> PixelCaches:
    start = time.perf_counter()
    caches = PixelCaches(strategy=strategy)
    if strategy.tag == 'radix':
        caches.radix = build_radix_cache(keys, strategy.radix, rng)
    elif strategy.tag == 'scan':
        if image is None:
            raise DomainError("La estrategia scan necesita la imagen a escanear")
        caches.values = build_scan_cache(image, keys, rng, strategy.top_k, workers)
    elif strategy.tag == 'full':
        caches.values = build_full_cache(keys, rng, workers)
    if strategy.uses_pool:
        caches.pool = build_zero_pool(keys, strategy.pool_size, rng, workers)
    caches.build_seconds = time.perf_counter() - start
    logger.info("Cachés '%s' construidas en %.3f s", strategy.tag, caches.build_seconds)
    return caches


def draw_zero(pool: ZeroPool, rng: np.random.Generator) -> Ciphertext:
    """Elemento uniforme del pool (con reemplazo), devuelto por copia."""
    if pool is None or len(pool) == 0:
        raise PoolError("El pool de ceros está vacío")
    pool._record()
    return pool.zeros[int(rng.integers(len(pool)))].copy()


def default_zero_mix(pool_size: int, degree: int) -> int:
    """Menor número de términos con C(2N·Z + m - 1, m) >= MIN_ZERO_COMBINATIONS."""
    choices = 2 * degree * pool_size
    mix = 2
    while mix < MAX_ZERO_MIX and math.comb(choices + mix - 1, mix) < MIN_ZERO_COMBINATIONS:
        mix += 1
    return mix


def fresh_zero(pool: ZeroPool, rng: np.random.Generator, terms: Optional[int] = None) -> Ciphertext:
    """
    Suma de `terms` ceros del pool, cada uno multiplicado por ±X^j aleatorio.
    Sin `terms` se usa default_zero_mix.
    """
    if pool is None or len(pool) == 0:
        raise PoolError("El pool de ceros está vacío")
    if terms is None:
        terms = default_zero_mix(len(pool), pool.zeros[0].ctx.degree)
    acc = None
    for _ in range(terms):
        z = draw_zero(pool, rng)
        power = int(rng.integers(2 * z.ctx.degree))
        z = Ciphertext(tuple(p.monomial_shift(power) for p in z.parts), z.scale, z.level)
        acc = z if acc is None else ckks.add(acc, z)
    return acc


def _telescope(ct: Ciphertext, powers, i: int, r: int) -> Ciphertext:
    """ct ⊕ powers[i] ⊖ r × powers[i-1]; el valor descifrado no cambia."""
    ct = ckks.add(ct, powers[i])
    for _ in range(r):
        ct = ckks.sub(ct, powers[i - 1])
    return ct


def randomize_radix(ct: Ciphertext, cache: RadixCache, rng: np.random.Generator,
                    coins: Optional[List[bool]] = None) -> Ciphertext:
    """
    Para cada i >= 1, con probabilidad ½ aplica ct ⊕ r^i ⊖ r × r^(i-1).
    `coins` fuerza las decisiones (índice i-1 → potencia i).
    """
    powers = cache.powers
    if len(powers) < 2:
        raise UnsupportedError("La aleatorización radix necesita al menos 2 potencias")
    if coins is None:
        coins = list(rng.random(len(powers) - 1) < 0.5)
    for i in range(1, len(powers)):
        if coins[i - 1]:
            ct = _telescope(ct, powers, i, cache.radix)
    return ct


def _encrypt_radix(p: int, caches: PixelCaches, rng: np.random.Generator) -> Ciphertext:
    cache, strategy = caches.radix, caches.strategy
    powers = cache.powers
    acc = None
    for j, d in enumerate(radix_decompose(p, cache.radix)):
        for _ in range(d):
            acc = powers[j] if acc is None else ckks.add(acc, powers[j])
    if acc is None:
        if len(powers) < 2:
            raise UnsupportedError("Cifrar 0 por radix necesita al menos 2 potencias")
        acc = powers[1]
        for _ in range(cache.radix):
            acc = ckks.sub(acc, powers[0])
    elif any(acc is x for x in powers):
        acc = acc.copy()
    if strategy.randomness:
        acc = randomize_radix(acc, cache, rng)
        if strategy.radix_zero_pool:
            acc = ckks.add(acc, fresh_zero(caches.pool, rng, strategy.zero_mix))
    return acc


def encrypt_pixel(p: int, caches: PixelCaches, keys: KeySet, rng: np.random.Generator) -> Ciphertext:
    """
    Cifra un valor de píxel según la estrategia de `caches`.
    none → cifrado fresco; radix → suma de potencias cacheadas + aleatorización;
    scan/full → copia de la entrada cacheada + ceros del pool.
    """
    p = int(p)
    if not 0 <= p <= PIXEL_MAX:
        raise DomainError(f"Valor de píxel fuera de [0, 255]: {p}")
    strategy = caches.strategy
    if strategy.tag == 'none':
        return ckks.encrypt_value(p, keys, rng)
    if strategy.tag == 'radix':
        return _encrypt_radix(p, caches, rng)

    entry = caches.values.entries.get(p)
    if entry is None:
        if strategy.fallback_fresh:
            logger.debug("Fallo de caché para %d: cifrado fresco", p)
            return ckks.encrypt_value(p, keys, rng)
        raise CacheMissError(p)
    if not strategy.randomness:
        return entry.copy()
    return ckks.add(entry, fresh_zero(caches.pool, rng, strategy.zero_mix))


# ---------------------------------------------------------------------------
# Persistencia ICHC
# ---------------------------------------------------------------------------

CACHE_MAGIC = b'ICHC'
CACHE_VERSION = 1
POOL_RECORD = 0xFFFF
CACHE_HEADER = struct.Struct('<4sHBBH32s')


def encode_cache(caches: PixelCaches, fingerprint: bytes) -> bytes:
    strategy = caches.strategy
    if strategy.radix > 255:
        raise ParameterError(f"La base radix {strategy.radix} no cabe en el formato ICHC")
    records = []
    if caches.radix is not None:
        records += [(caches.radix.radix ** i, ct) for i, ct in enumerate(caches.radix.powers)]
    if caches.values is not None:
        records += sorted(caches.values.entries.items(), key=lambda kv: kv[0])
    if caches.pool is not None:
        records += [(POOL_RECORD, z) for z in caches.pool.zeros]
    if len(records) > 0xFFFF:
        raise ParameterError(f"Demasiadas entradas para ICHC: {len(records)}")
    head = CACHE_HEADER.pack(CACHE_MAGIC, CACHE_VERSION, strategy.code, strategy.radix,
                             len(records), fingerprint)
    return head + b''.join(struct.pack('<H', v) + ct.to_bytes() for v, ct in records)


def save_cache(caches: PixelCaches, path: str, fingerprint: bytes):
    """Guarda las cachés y el pool; la huella liga el fichero al juego de claves."""
    atomic_write(path, encode_cache(caches, fingerprint))
    logger.info("Caché '%s' guardada en %s", caches.strategy.tag, path)


def decode_cache(buf: bytes, params: CkksParams, strategy: Optional[CacheStrategy] = None,
                 fingerprint: Optional[bytes] = None) -> PixelCaches:
    if len(buf) < CACHE_HEADER.size:
        raise FormatError("Fichero ICHC truncado (cabecera)")
    magic, version, code, r, count, stored_fp = CACHE_HEADER.unpack_from(buf, 0)
    if magic != CACHE_MAGIC:
        raise FormatError(f"Magic inválido {magic!r}, se esperaba {CACHE_MAGIC!r}")
    if version != CACHE_VERSION:
        raise FormatError(f"Versión ICHC no soportada: {version}")
    tags = {v: k for k, v in STRATEGY_TAGS.items()}
    if code not in tags:
        raise FormatError(f"Estrategia desconocida en ICHC: {code}")
    if fingerprint is not None and stored_fp != fingerprint:
        raise KeyMismatchError("La caché se generó con otras claves")
    tag = tags[code]
    if strategy is not None and (strategy.code != code or (tag == 'radix' and strategy.radix != r)):
        raise ParameterError(f"La caché guardada es '{tag}' (r={r}), "
                             f"no '{strategy.tag}' (r={strategy.radix})")

    ctx = ckks.context_for(params)
    offset = CACHE_HEADER.size
    powers, entries, zeros = [], {}, []
    for _ in range(count):
        if offset + 2 > len(buf):
            raise FormatError("Fichero ICHC truncado (registro)")
        (value,) = struct.unpack_from('<H', buf, offset)
        ct, offset = Ciphertext.from_bytes(ctx, buf, offset + 2)
        if value == POOL_RECORD:
            zeros.append(ct)
        elif tag == 'radix':
            powers.append(ct)
        elif value <= PIXEL_MAX:
            entries[value] = ct
        else:
            raise FormatError(f"Valor de píxel inválido en ICHC: {value}")
    if offset != len(buf):
        raise FormatError("Bytes sobrantes al final del fichero ICHC")

    if strategy is None:
        # sin estrategia explícita, se deduce del propio fichero
        strategy = CacheStrategy(tag=tag, radix=max(r, 2), pool_size=len(zeros) or DEFAULT_POOL_SIZE,
                                 randomness=bool(zeros) or tag == 'radix',
                                 radix_zero_pool=tag == 'radix' and bool(zeros))

    caches = PixelCaches(strategy=strategy)
    if strategy.tag == 'radix':
        caches.radix = RadixCache(radix=r, powers=tuple(powers))
    elif strategy.tag in ('scan', 'full'):
        caches.values = ValueCache(entries)
    if zeros:
        caches.pool = ZeroPool(tuple(zeros))
    elif strategy.uses_pool:
        raise PoolError("La caché guardada no incluye pool de ceros")
    return caches


def load_cache(path: str, params: CkksParams, strategy: Optional[CacheStrategy] = None,
               fingerprint: Optional[bytes] = None) -> PixelCaches:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Caché no encontrada: {path}")
    with open(path, 'rb') as f:
        return decode_cache(f.read(), params, strategy, fingerprint)
