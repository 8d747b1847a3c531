"""
Juego de indistinguibilidad con texto plano elegido contra el cifrado por
caché. El adversario conoce las entradas publicadas de la caché y sólo
compara bytes: si el reto coincide con la reconstrucción determinista de
m0 o m1 acierta; si no, adivina al azar.
"""
import logging
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np
from scipy.stats import binomtest

from scripts.cache import CacheStrategy, PixelCaches, encrypt_pixel
from scripts.ckks import KeySet
from scripts.errors import DomainError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GameResult:
    strategy: str
    randomness: bool
    trials: int
    correct: int
    ci_low: float
    ci_high: float

    @property
    def accuracy(self) -> float:
        return self.correct / self.trials

    @property
    def contains_half(self) -> bool:
        return self.ci_low <= 0.5 <= self.ci_high


def _reference_bytes(m: int, caches: PixelCaches, keys: KeySet, rng: np.random.Generator) -> Optional[bytes]:
    """Lo que el adversario puede calcular con la caché publicada."""
    if caches.strategy.tag == 'none':
        return None
    public = replace(caches, strategy=replace(caches.strategy, randomness=False, fallback_fresh=False))
    return encrypt_pixel(m, public, keys, rng).to_bytes()


def ind_cpa_game(keys: KeySet, caches: PixelCaches, trials: int, rng: np.random.Generator,
                 m0: int = 0, m1: int = 255, strategy: Optional[CacheStrategy] = None) -> GameResult:
    if trials < 1:
        raise DomainError(f"Se necesita al menos una ronda, recibido {trials}")
    if m0 == m1:
        raise DomainError("Los dos mensajes elegidos deben ser distintos")
    if strategy is not None:
        caches = replace(caches, strategy=strategy)

    refs = (_reference_bytes(m0, caches, keys, rng), _reference_bytes(m1, caches, keys, rng))
    correct = 0
    for _ in range(trials):
        b = int(rng.integers(2))
        challenge = encrypt_pixel((m0, m1)[b], caches, keys, rng).to_bytes()
        if challenge == refs[0]:
            guess = 0
        elif challenge == refs[1]:
            guess = 1
        else:
            guess = int(rng.integers(2))
        correct += int(guess == b)

    ci = binomtest(correct, trials).proportion_ci(confidence_level=0.95)
    result = GameResult(caches.strategy.tag, caches.strategy.randomness, trials, correct,
                        float(ci.low), float(ci.high))
    logger.info("Juego IND-CPA '%s' (aleatorio=%s): %d/%d aciertos, IC95%% [%.3f, %.3f]",
                result.strategy, result.randomness, correct, trials, result.ci_low, result.ci_high)
    return result
