"""
Aritmética en Z_Q[X]/(X^N+1) con representación RNS: un limb de N residuos
por cada primo activo de la cadena, en palabras uint64.

La multiplicación usa la NTT negacíclica (Cooley-Tukey hacia delante,
Gentleman-Sande hacia atrás, con potencias de ψ en orden bit-reverso).
La multiplicación de escuela O(N²) queda disponible como oráculo.
"""
import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence, Tuple

import numpy as np
from sympy.ntheory import primitive_root

U64 = np.uint64


def mul_mod(a, b, q, bits: int):
    """
    (a · b) mod q elemento a elemento, sin desbordar uint64.
    Para primos de más de 32 bits se parte b en trozos de (63 - bits) bits
    y se acumula por Horner.
    """
    if bits <= 32:
        return (a * b) % q
    chunk = 63 - bits
    mask = U64((1 << chunk) - 1)
    shift = U64(chunk)
    pieces = -(-bits // chunk)
    acc = None
    for k in reversed(range(pieces)):
        piece = (b >> U64(k * chunk)) & mask
        term = (a * piece) % q
        acc = term if acc is None else ((acc << shift) % q + term) % q
    return acc


def _bit_reverse(n: int) -> np.ndarray:
    logn = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(logn):
        rev |= ((idx >> b) & 1) << (logn - 1 - b)
    return rev


@dataclass(frozen=True, eq=False)
class RingContext:
    """Tablas precalculadas por (N, cadena). Inmutable y compartible entre hilos."""
    degree: int
    primes: Tuple[int, ...]
    bits: int
    moduli: np.ndarray
    psi_rev: np.ndarray
    psi_inv_rev: np.ndarray
    n_inv: np.ndarray

    def q(self, limbs: int, ndim: int = 2) -> np.ndarray:
        return self.moduli[:limbs].reshape((limbs,) + (1,) * (ndim - 1))


@lru_cache(maxsize=None)
def ring_context(degree: int, primes: Tuple[int, ...]) -> RingContext:
    rev = _bit_reverse(degree)
    psi_rev, psi_inv_rev, n_inv = [], [], []
    for q in primes:
        psi = pow(primitive_root(q), (q - 1) // (2 * degree), q)
        assert pow(psi, degree, q) == q - 1
        psi_inv = pow(psi, -1, q)
        pows = np.empty(degree, dtype=U64)
        inv_pows = np.empty(degree, dtype=U64)
        cur, cur_inv = 1, 1
        for i in range(degree):
            pows[i], inv_pows[i] = cur, cur_inv
            cur, cur_inv = cur * psi % q, cur_inv * psi_inv % q
        psi_rev.append(pows[rev])
        psi_inv_rev.append(inv_pows[rev])
        n_inv.append(pow(degree, -1, q))
    return RingContext(
        degree=degree,
        primes=tuple(primes),
        bits=max(q.bit_length() for q in primes),
        moduli=np.array(primes, dtype=U64),
        psi_rev=np.stack(psi_rev),
        psi_inv_rev=np.stack(psi_inv_rev),
        n_inv=np.array(n_inv, dtype=U64),
    )


def ntt_forward(a: np.ndarray, ctx: RingContext) -> np.ndarray:
    limbs, n = a.shape
    q = ctx.q(limbs, 3)
    x = a.copy()
    m, t = 1, n
    while m < n:
        t //= 2
        x = x.reshape(limbs, m, 2 * t)
        s = ctx.psi_rev[:limbs, m:2 * m].reshape(limbs, m, 1)
        u = x[:, :, :t]
        v = mul_mod(x[:, :, t:], s, q, ctx.bits)
        x = np.concatenate(((u + v) % q, (u + q - v) % q), axis=2)
        m *= 2
    return x.reshape(limbs, n)


def ntt_inverse(a: np.ndarray, ctx: RingContext) -> np.ndarray:
    limbs, n = a.shape
    q = ctx.q(limbs, 3)
    x = a.copy()
    m, t = n, 1
    while m > 1:
        h = m // 2
        x = x.reshape(limbs, h, 2 * t)
        s = ctx.psi_inv_rev[:limbs, h:2 * h].reshape(limbs, h, 1)
        u = x[:, :, :t]
        v = x[:, :, t:]
        x = np.concatenate(((u + v) % q, mul_mod((u + q - v) % q, s, q, ctx.bits)), axis=2)
        t *= 2
        m = h
    x = x.reshape(limbs, n)
    return mul_mod(x, ctx.n_inv[:limbs].reshape(limbs, 1), ctx.q(limbs), ctx.bits)


def negacyclic_schoolbook(a: Sequence[int], b: Sequence[int], q: int) -> list:
    """Producto ingenuo O(N²) en Z_q[X]/(X^N+1). Oráculo para los tests."""
    n = len(a)
    out = [0] * n
    for i in range(n):
        ai = int(a[i])
        if not ai:
            continue
        for j in range(n):
            k = i + j
            if k < n:
                out[k] += ai * int(b[j])
            else:
                out[k - n] -= ai * int(b[j])
    return [c % q for c in out]


def crt_compose(data: np.ndarray, ctx: RingContext, centered: bool = True) -> np.ndarray:
    """Reconstruye los enteros mod Q_ℓ a partir de los residuos (array de objetos)."""
    limbs = data.shape[0]
    primes = ctx.primes[:limbs]
    big_q = math.prod(primes)
    acc = np.zeros(data.shape[1], dtype=object)
    for j, q in enumerate(primes):
        m = big_q // q
        inv = pow(m % q, -1, q)
        t = mul_mod(data[j], U64(inv), U64(q), ctx.bits)
        acc = acc + t.astype(object) * m
    acc = acc % big_q
    if centered:
        half = big_q // 2
        acc = np.array([x - big_q if x > half else x for x in acc], dtype=object)
    return acc


class Poly:
    """
    Polinomio RNS de forma (limbs, N). `ntt_form` indica si está en el
    dominio de evaluación.
    """
    __slots__ = ('ctx', 'data', 'ntt_form')

    def __init__(self, ctx: RingContext, data: np.ndarray, ntt_form: bool = False):
        if data.ndim != 2 or data.shape[1] != ctx.degree:
            raise ValueError(f"Forma de polinomio inválida {data.shape} para N={ctx.degree}")
        self.ctx = ctx
        self.data = data
        self.ntt_form = ntt_form

    @classmethod
    def zeros(cls, ctx: RingContext, limbs: int) -> 'Poly':
        return cls(ctx, np.zeros((limbs, ctx.degree), dtype=U64))

    @classmethod
    def from_ints(cls, ctx: RingContext, values, limbs: int) -> 'Poly':
        """Reduce enteros con signo (int64 o enteros de Python) a cada primo."""
        values = np.asarray(values)
        rows = []
        for q in ctx.primes[:limbs]:
            if values.dtype == np.int64:
                rows.append((values % np.int64(q)).astype(U64))
            else:
                rows.append((values.astype(object) % q).astype(U64))
        return cls(ctx, np.stack(rows))

    @classmethod
    def from_bytes(cls, ctx: RingContext, buf: bytes, limbs: int) -> 'Poly':
        data = np.frombuffer(buf, dtype='<u8').reshape(limbs, ctx.degree).astype(U64)
        return cls(ctx, data)

    @property
    def limbs(self) -> int:
        return self.data.shape[0]

    @property
    def level(self) -> int:
        return self.limbs - 1

    def _q(self) -> np.ndarray:
        return self.ctx.q(self.limbs)

    def copy(self) -> 'Poly':
        return Poly(self.ctx, self.data.copy(), self.ntt_form)

    def to_ntt(self) -> 'Poly':
        if self.ntt_form:
            return self
        return Poly(self.ctx, ntt_forward(self.data, self.ctx), True)

    def to_coeff(self) -> 'Poly':
        if not self.ntt_form:
            return self
        return Poly(self.ctx, ntt_inverse(self.data, self.ctx), False)

    def _aligned(self, other: 'Poly') -> 'Poly':
        if other.ctx is not self.ctx or other.limbs != self.limbs:
            raise ValueError("Polinomios con contexto o número de limbs distintos")
        if other.ntt_form == self.ntt_form:
            return other
        return other.to_ntt() if self.ntt_form else other.to_coeff()

    def __add__(self, other: 'Poly') -> 'Poly':
        other = self._aligned(other)
        return Poly(self.ctx, (self.data + other.data) % self._q(), self.ntt_form)

    def __sub__(self, other: 'Poly') -> 'Poly':
        other = self._aligned(other)
        q = self._q()
        return Poly(self.ctx, (self.data + q - other.data) % q, self.ntt_form)

    def __neg__(self) -> 'Poly':
        q = self._q()
        return Poly(self.ctx, (q - self.data) % q, self.ntt_form)

    def __mul__(self, other: 'Poly') -> 'Poly':
        return self.mul(other)

    def mul(self, other: 'Poly', schoolbook: bool = False) -> 'Poly':
        """Producto negacíclico. El resultado queda en dominio NTT (o coeficientes si schoolbook)."""
        if schoolbook:
            a, b = self.to_coeff(), self._aligned(other).to_coeff()
            rows = [negacyclic_schoolbook(a.data[j], b.data[j], q)
                    for j, q in enumerate(self.ctx.primes[:self.limbs])]
            return Poly(self.ctx, np.array(rows, dtype=U64))
        a, b = self.to_ntt(), self._aligned(other).to_ntt()
        return Poly(self.ctx, mul_mod(a.data, b.data, self._q(), self.ctx.bits), True)

    def mul_scalar(self, value: int) -> 'Poly':
        """Multiplica por un entero (con signo) reducido en cada primo."""
        residues = np.array([value % q for q in self.ctx.primes[:self.limbs]], dtype=U64)
        return Poly(self.ctx, mul_mod(self.data, residues.reshape(-1, 1), self._q(), self.ctx.bits),
                    self.ntt_form)

    def monomial_shift(self, power: int) -> 'Poly':
        """Multiplica por X^power (con X^N = -1)."""
        src = self.to_coeff()
        n = self.ctx.degree
        power %= 2 * n
        flip, j = power >= n, power % n
        q = self._q()
        out = np.roll(src.data, j, axis=1)
        out[:, :j] = (q - out[:, :j]) % q
        if flip:
            out = (q - out) % q
        return Poly(self.ctx, out)

    def truncate(self, limbs: int) -> 'Poly':
        """Conserva los primeros `limbs` primos (reducción módulo Q_ℓ)."""
        return Poly(self.ctx, self.data[:limbs].copy(), self.ntt_form)

    def to_integers(self, centered: bool = True) -> np.ndarray:
        return crt_compose(self.to_coeff().data, self.ctx, centered)

    def to_bytes(self) -> bytes:
        return self.to_coeff().data.astype('<u8').tobytes()

    def __repr__(self):
        form = 'ntt' if self.ntt_form else 'coeff'
        return f"Poly(N={self.ctx.degree}, limbs={self.limbs}, {form})"
