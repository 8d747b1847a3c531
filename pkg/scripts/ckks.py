"""
Esquema CKKS (aproximado) sobre el anillo RNS de scripts.ring.

Convención de signos: pk = (-a·s + e, a), ct = (v·pk0 + m + e0, v·pk1 + e1),
descifrado m' = ct0 + ct1·s (+ ct2·s² para grado 2).
"""
import math
import struct
import hashlib
import secrets
import logging
import threading
from dataclasses import dataclass, field
from functools import lru_cache
from typing import List, Optional, Tuple

import numpy as np

from scripts.errors import (
    DimensionError,
    EncodingOverflowError,
    FormatError,
    KeyMismatchError,
    LevelError,
    LevelExhaustedError,
    ScaleError,
    UnsupportedError,
)
from scripts.params import CkksParams
from scripts.ring import Poly, RingContext, U64, crt_compose, mul_mod, ring_context

logger = logging.getLogger(__name__)

SCALE_TOLERANCE = 2.0 ** -20
RELIN_BASE_BITS = 16


class OpCounters:
    """Contadores de operaciones con clave (cifrados RLWE frescos y descifrados)."""

    def __init__(self):
        self._lock = threading.Lock()
        self._counts = {'encryptions': 0, 'decryptions': 0}

    def increment(self, name: str):
        with self._lock:
            self._counts[name] += 1

    def snapshot(self) -> dict:
        with self._lock:
            return dict(self._counts)


counters = OpCounters()


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def context_for(params: CkksParams) -> RingContext:
    return ring_context(params.ring_degree, params.primes)


# ---------------------------------------------------------------------------
# Muestreo
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _gaussian_cdf(sigma: float) -> Tuple[int, np.ndarray]:
    bound = math.ceil(6 * sigma)
    support = np.arange(-bound, bound + 1)
    weights = np.exp(-support.astype(float) ** 2 / (2 * sigma ** 2))
    return bound, np.cumsum(weights / weights.sum())


def sample_gaussian(rng: np.random.Generator, n: int, sigma: float) -> np.ndarray:
    """Gaussiana discreta centrada por tabla de CDF inversa truncada en 6σ."""
    bound, cdf = _gaussian_cdf(sigma)
    idx = np.searchsorted(cdf, rng.random(n), side='right')
    return np.minimum(idx, len(cdf) - 1).astype(np.int64) - bound


def sample_ternary(rng: np.random.Generator, n: int) -> np.ndarray:
    return rng.integers(-1, 2, size=n, dtype=np.int64)


def sample_uniform(ctx: RingContext, limbs: int, rng: np.random.Generator) -> Poly:
    rows = [rng.integers(0, q, size=ctx.degree, dtype=U64) for q in ctx.primes[:limbs]]
    return Poly(ctx, np.stack(rows))


# ---------------------------------------------------------------------------
# Tipos
# ---------------------------------------------------------------------------

@dataclass
class Plaintext:
    poly: Poly
    scale: float
    level: int
    constant: Optional[int] = None

    def __post_init__(self):
        if self.scale <= 0:
            raise ScaleError(f"La escala debe ser positiva, recibido {self.scale}")


@dataclass
class Ciphertext:
    parts: Tuple[Poly, ...]
    scale: float
    level: int

    def __post_init__(self):
        self.parts = tuple(self.parts)
        if len(self.parts) not in (2, 3):
            raise FormatError(f"Un cifrado tiene 2 o 3 partes, recibido {len(self.parts)}")

    @property
    def degree(self) -> int:
        return len(self.parts) - 1

    @property
    def ctx(self) -> RingContext:
        return self.parts[0].ctx

    def copy(self) -> 'Ciphertext':
        return Ciphertext(tuple(p.copy() for p in self.parts), self.scale, self.level)

    def to_bytes(self) -> bytes:
        head = struct.pack('<BBd', self.degree, self.level, self.scale)
        return head + b''.join(p.to_bytes() for p in self.parts)

    @classmethod
    def from_bytes(cls, ctx: RingContext, buf: bytes, offset: int = 0) -> Tuple['Ciphertext', int]:
        """Lee un cifrado en `offset`; devuelve el cifrado y el nuevo offset."""
        if offset + 10 > len(buf):
            raise FormatError("Cifrado truncado (cabecera)")
        degree, level, scale = struct.unpack_from('<BBd', buf, offset)
        if degree not in (1, 2):
            raise FormatError(f"Grado de cifrado desconocido: {degree}")
        if level >= len(ctx.primes):
            raise FormatError(f"Nivel {level} fuera de la cadena")
        offset += 10
        size = (level + 1) * ctx.degree * 8
        parts = []
        for _ in range(degree + 1):
            if offset + size > len(buf):
                raise FormatError("Cifrado truncado (residuos)")
            parts.append(Poly.from_bytes(ctx, buf[offset:offset + size], level + 1))
            offset += size
        return cls(tuple(parts), scale, level), offset

    def __repr__(self):
        return f"Ciphertext(degree={self.degree}, level={self.level}, log2_scale={math.log2(self.scale):.2f})"


@dataclass
class KeySet:
    params: CkksParams
    secret: Optional[np.ndarray]
    public: Tuple[Poly, Poly]
    relin: List[Tuple[Poly, Poly]]
    seed: Optional[int] = None
    _ntt_cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def ctx(self) -> RingContext:
        return context_for(self.params)

    @property
    def fingerprint(self) -> bytes:
        if 'fingerprint' not in self._ntt_cache:
            h = hashlib.sha256(self.params.packed())
            for p in self.public:
                h.update(p.to_bytes())
            self._ntt_cache['fingerprint'] = h.digest()
        return self._ntt_cache['fingerprint']

    def public_ntt(self) -> Tuple[Poly, Poly]:
        if 'pk' not in self._ntt_cache:
            self._ntt_cache['pk'] = tuple(p.to_ntt() for p in self.public)
        return self._ntt_cache['pk']

    def secret_ntt(self, limbs: int) -> Poly:
        if self.secret is None:
            raise KeyMismatchError("El juego de claves no contiene la clave secreta")
        if 'sk' not in self._ntt_cache:
            full = Poly.from_ints(self.ctx, self.secret.astype(np.int64), len(self.params.primes))
            self._ntt_cache['sk'] = full.to_ntt()
        return self._ntt_cache['sk'].truncate(limbs)

    def relin_ntt(self, limbs: int) -> List[Tuple[Poly, Poly]]:
        if 'evk' not in self._ntt_cache:
            self._ntt_cache['evk'] = [(b.to_ntt(), a.to_ntt()) for b, a in self.relin]
        return [(b.truncate(limbs), a.truncate(limbs)) for b, a in self._ntt_cache['evk']]


# ---------------------------------------------------------------------------
# Claves
# ---------------------------------------------------------------------------

def relin_digit_count(params: CkksParams, level: Optional[int] = None) -> int:
    return -(-params.modulus(level).bit_length() // RELIN_BASE_BITS)


def keygen(params: CkksParams, seed: Optional[int] = None) -> KeySet:
    """
    Genera clave secreta ternaria, clave pública y clave de relinealización
    (descomposición en dígitos base 2^16). Con la misma semilla la salida es
    idéntica bit a bit.
    """
    params.validate()
    seed = secrets.randbits(256) if seed is None else int(seed)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    ctx = context_for(params)
    n, limbs = params.ring_degree, len(params.primes)

    s = sample_ternary(rng, n)
    while not s.any():
        s = sample_ternary(rng, n)
    s_poly = Poly.from_ints(ctx, s, limbs)

    a = sample_uniform(ctx, limbs, rng)
    e = Poly.from_ints(ctx, sample_gaussian(rng, n, params.noise_std), limbs)
    pk0 = (-(a * s_poly)).to_coeff() + e

    s2 = (s_poly * s_poly).to_coeff()
    relin = []
    for i in range(relin_digit_count(params)):
        a_i = sample_uniform(ctx, limbs, rng)
        e_i = Poly.from_ints(ctx, sample_gaussian(rng, n, params.noise_std), limbs)
        b_i = (-(a_i * s_poly)).to_coeff() + e_i + s2.mul_scalar(1 << (RELIN_BASE_BITS * i))
        relin.append((b_i, a_i))

    logger.info("Claves generadas (%s, %d dígitos de relinealización)", params.name, len(relin))
    return KeySet(params=params, secret=s.astype(np.int8), public=(pk0, a), relin=relin, seed=seed)


# ---------------------------------------------------------------------------
# Codificación
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _embedding_tables(n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    two_n = 2 * n
    exps = np.array([pow(5, j, two_n) for j in range(n // 2)])
    idx = (exps - 1) // 2
    conj_idx = (two_n - exps - 1) // 2
    twist = np.exp(1j * np.pi * np.arange(n) / n)
    return idx, conj_idx, twist


def _check_capacity(max_abs: float, params: CkksParams, level: int):
    if max_abs >= params.modulus(level) / 2:
        raise EncodingOverflowError(
            f"|valor·escala|≈2^{math.log2(max_abs):.1f} excede la mitad del módulo activo "
            f"(2^{math.log2(params.modulus(level)):.1f})")


def encode_scalar(value: float, params: CkksParams, level: Optional[int] = None,
                  scale: Optional[float] = None) -> Plaintext:
    """Polinomio constante round(value·scale): el escalar ocupa todos los slots."""
    level = params.max_level if level is None else level
    scale = float(params.delta if scale is None else scale)
    coeff = round_half_away(value * scale)
    if coeff:
        _check_capacity(abs(float(coeff)), params, level)
    ctx = context_for(params)
    poly = Poly.zeros(ctx, level + 1)
    poly.data[:, 0] = [coeff % q for q in ctx.primes[:level + 1]]
    return Plaintext(poly, scale, level, constant=coeff)


def encode_vector(values, params: CkksParams, level: Optional[int] = None,
                  scale: Optional[float] = None) -> Plaintext:
    """Inversa de la inmersión canónica sobre el vector extendido con conjugados."""
    n = params.ring_degree
    level = params.max_level if level is None else level
    scale = float(params.delta if scale is None else scale)
    z = np.asarray(values, dtype=np.complex128).ravel()
    if z.size > n // 2:
        raise DimensionError(f"Vector de longitud {z.size} excede N/2={n // 2} slots")

    idx, conj_idx, twist = _embedding_tables(n)
    slots = np.zeros(n // 2, dtype=np.complex128)
    slots[:z.size] = z * scale
    evals = np.zeros(n, dtype=np.complex128)
    evals[idx] = slots
    evals[conj_idx] = np.conj(slots)
    coeffs = (np.fft.fft(evals) / n * np.conj(twist)).real
    coeffs = np.sign(coeffs) * np.floor(np.abs(coeffs) + 0.5)
    _check_capacity(float(np.max(np.abs(coeffs))), params, level)
    poly = Poly.from_ints(context_for(params), coeffs.astype(np.int64), level + 1)
    return Plaintext(poly, scale, level)


def decode(pt: Plaintext) -> np.ndarray:
    """Inmersión canónica en las raíces primitivas, dividida por la escala."""
    ints = pt.poly.to_integers(centered=True).astype(np.float64)
    n = ints.size
    idx, _, twist = _embedding_tables(n)
    evals = np.fft.ifft(ints * twist) * n
    return evals[idx] / pt.scale


def decode_scalar(pt: Plaintext) -> float:
    """Media de todos los slots, que para un polinomio constante es coef₀ / escala."""
    value = crt_compose(pt.poly.to_coeff().data[:, :1], pt.poly.ctx, centered=True)[0]
    return float(value) / pt.scale


# ---------------------------------------------------------------------------
# Cifrado y descifrado
# ---------------------------------------------------------------------------

def _same_ring(ctx_a: RingContext, ctx_b: RingContext):
    if ctx_a is not ctx_b:
        raise KeyMismatchError("Operandos con parámetros CKKS distintos")


def encrypt(pt: Plaintext, keys: KeySet, rng: np.random.Generator) -> Ciphertext:
    _same_ring(pt.poly.ctx, keys.ctx)
    if pt.level != keys.params.max_level:
        raise LevelError(f"El texto plano está en nivel {pt.level}; se cifra en el nivel {keys.params.max_level}")
    ctx, n = keys.ctx, keys.params.ring_degree
    limbs = pt.level + 1
    pk0, pk1 = keys.public_ntt()

    v = Poly.from_ints(ctx, sample_ternary(rng, n), limbs).to_ntt()
    e0 = Poly.from_ints(ctx, sample_gaussian(rng, n, keys.params.noise_std), limbs)
    e1 = Poly.from_ints(ctx, sample_gaussian(rng, n, keys.params.noise_std), limbs)
    c0 = (v * pk0).to_coeff() + pt.poly.to_coeff() + e0
    c1 = (v * pk1).to_coeff() + e1
    counters.increment('encryptions')
    return Ciphertext((c0, c1), pt.scale, pt.level)


def encrypt_value(value: float, keys: KeySet, rng: np.random.Generator) -> Ciphertext:
    return encrypt(encode_scalar(value, keys.params), keys, rng)


def decrypt(ct: Ciphertext, keys: KeySet) -> Plaintext:
    if len(ct.parts) not in (2, 3):
        raise FormatError(f"Grado de cifrado no soportado: {len(ct.parts) - 1}")
    _same_ring(ct.ctx, keys.ctx)
    limbs = ct.level + 1
    s = keys.secret_ntt(limbs)
    acc = ct.parts[1].to_ntt() * s
    if ct.degree == 2:
        acc = acc + ct.parts[2].to_ntt() * s * s
    m = ct.parts[0].to_coeff() + acc.to_coeff()
    counters.increment('decryptions')
    return Plaintext(m, ct.scale, ct.level)


def decrypt_value(ct: Ciphertext, keys: KeySet) -> float:
    return decode_scalar(decrypt(ct, keys))


def measure_noise(ct: Ciphertext, keys: KeySet, value: float) -> int:
    """Norma infinito del error e' = m' - round(value·escala), en unidades enteras."""
    ints = decrypt(ct, keys).poly.to_integers(centered=True)
    ints[0] -= round_half_away(value * ct.scale)
    return int(max(abs(int(x)) for x in ints))


# ---------------------------------------------------------------------------
# Operaciones homomórficas
# ---------------------------------------------------------------------------

def _check_pair(a_ctx: RingContext, b_ctx: RingContext, a_level: int, b_level: int,
                a_scale: float, b_scale: float):
    _same_ring(a_ctx, b_ctx)
    if a_level != b_level:
        raise LevelError(f"Niveles distintos: {a_level} != {b_level}")
    if abs(a_scale - b_scale) > SCALE_TOLERANCE * max(a_scale, b_scale):
        raise ScaleError(f"Escalas distintas: 2^{math.log2(a_scale):.4f} != 2^{math.log2(b_scale):.4f}")


def _padded(a: Ciphertext, b: Ciphertext):
    pa, pb = list(a.parts), list(b.parts)
    while len(pa) < len(pb):
        pa.append(Poly.zeros(a.ctx, a.level + 1))
    while len(pb) < len(pa):
        pb.append(Poly.zeros(b.ctx, b.level + 1))
    return pa, pb


def add(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    _check_pair(a.ctx, b.ctx, a.level, b.level, a.scale, b.scale)
    pa, pb = _padded(a, b)
    return Ciphertext(tuple(x + y for x, y in zip(pa, pb)), a.scale, a.level)


def sub(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    _check_pair(a.ctx, b.ctx, a.level, b.level, a.scale, b.scale)
    pa, pb = _padded(a, b)
    return Ciphertext(tuple(x - y for x, y in zip(pa, pb)), a.scale, a.level)


def add_plain(a: Ciphertext, pt: Plaintext) -> Ciphertext:
    _check_pair(a.ctx, pt.poly.ctx, a.level, pt.level, a.scale, pt.scale)
    return Ciphertext((a.parts[0] + pt.poly,) + a.parts[1:], a.scale, a.level)


def mul_plain(a: Ciphertext, pt: Plaintext) -> Ciphertext:
    _same_ring(a.ctx, pt.poly.ctx)
    if a.level != pt.level:
        raise LevelError(f"Niveles distintos: {a.level} != {pt.level}")
    scale = a.scale * pt.scale
    _check_scale_fits(scale, a.ctx, a.level)
    if pt.constant is not None:
        parts = tuple(p.mul_scalar(pt.constant) for p in a.parts)
    else:
        plain = pt.poly.to_ntt()
        parts = tuple((p * plain).to_coeff() for p in a.parts)
    return Ciphertext(parts, scale, a.level)


def _check_scale_fits(scale: float, ctx: RingContext, level: int):
    modulus = math.prod(ctx.primes[:level + 1])
    if scale >= modulus / 2:
        raise ScaleError(f"La escala 2^{math.log2(scale):.1f} no cabe en el módulo activo "
                         f"(2^{math.log2(modulus):.1f})")


def mul(a: Ciphertext, b: Ciphertext) -> Ciphertext:
    """Producto de grado 2: (a0·b0, a0·b1 + a1·b0, a1·b1) a escala a.scale·b.scale."""
    if a.degree != 1 or b.degree != 1:
        raise UnsupportedError("mul requiere cifrados de grado 1 (relinealiza antes)")
    _same_ring(a.ctx, b.ctx)
    if a.level != b.level:
        raise LevelError(f"Niveles distintos: {a.level} != {b.level}")
    scale = a.scale * b.scale
    _check_scale_fits(scale, a.ctx, a.level)
    a0, a1 = (p.to_ntt() for p in a.parts)
    b0, b1 = (p.to_ntt() for p in b.parts)
    parts = (a0 * b0, a0 * b1 + a1 * b0, a1 * b1)
    return Ciphertext(tuple(p.to_coeff() for p in parts), scale, a.level)


def relinearize(ct: Ciphertext, keys: KeySet) -> Ciphertext:
    """
    Reduce un cifrado de grado 2 a grado 1 descomponiendo c2 en dígitos base
    2^16 contra la clave evk. Un cifrado de grado 1 se devuelve tal cual.
    """
    if ct.degree == 1:
        return ct
    if ct.ctx is not keys.ctx:
        raise KeyMismatchError("La clave de relinealización es de otros parámetros")
    ctx, limbs = ct.ctx, ct.level + 1
    c2 = ct.parts[2].to_integers(centered=False)
    evk = keys.relin_ntt(limbs)
    digits = relin_digit_count(keys.params, ct.level)
    mask = (1 << RELIN_BASE_BITS) - 1
    acc0 = acc1 = None
    for i in range(digits):
        d = np.array([(x >> (RELIN_BASE_BITS * i)) & mask for x in c2], dtype=np.int64)
        d_poly = Poly.from_ints(ctx, d, limbs).to_ntt()
        b_i, a_i = evk[i]
        t0, t1 = d_poly * b_i, d_poly * a_i
        acc0 = t0 if acc0 is None else acc0 + t0
        acc1 = t1 if acc1 is None else acc1 + t1
    c0 = ct.parts[0].to_coeff() + acc0.to_coeff()
    c1 = ct.parts[1].to_coeff() + acc1.to_coeff()
    return Ciphertext((c0, c1), ct.scale, ct.level)


def rescale(ct: Ciphertext) -> Ciphertext:
    """Divide por el último primo activo q_ℓ con redondeo y baja un nivel."""
    if ct.level == 0:
        raise LevelExhaustedError("No quedan niveles para reescalar")
    ctx, level = ct.ctx, ct.level
    q_last = ctx.primes[level]
    q_rest = ctx.q(level)
    q_last_mod = np.array([q_last % q for q in ctx.primes[:level]], dtype=U64).reshape(-1, 1)
    inv = np.array([pow(q_last, -1, q) for q in ctx.primes[:level]], dtype=U64).reshape(-1, 1)
    parts = []
    for p in ct.parts:
        data = p.to_coeff().data
        last = data[level:level + 1]
        last_mod = last % q_rest
        centered = np.where(last > U64(q_last // 2), (last_mod + q_rest - q_last_mod) % q_rest, last_mod)
        diff = (data[:level] + q_rest - centered) % q_rest
        parts.append(Poly(ctx, mul_mod(diff, inv, q_rest, ctx.bits)))
    return Ciphertext(tuple(parts), ct.scale / q_last, level - 1)
