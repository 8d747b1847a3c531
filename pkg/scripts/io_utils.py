import os
import json
import struct
import tempfile
from typing import Callable, Tuple

import numpy as np
import pandas as pd

from scripts.ckks import KeySet, context_for
from scripts.errors import FormatError, KeyMismatchError
from scripts.params import CkksParams
from scripts.ring import Poly

KEY_MAGIC = b'ICHK'
KEY_VERSION = 1
KEY_FILES = ('secret.ichk', 'public.ichk', 'relin.ichk')
SEED_BYTES = 32


def _ensure_parent(path: str):
    parent = os.path.dirname(os.path.abspath(path))
    os.makedirs(parent, exist_ok=True)
    return parent


def atomic_write_with(path: str, writer: Callable, mode: str = 'wb'):
    """
    Escribe en un temporal del mismo directorio y lo renombra sobre `path`.
    Si `writer` falla no queda ningún fichero parcial.
    """
    parent = _ensure_parent(path)
    fd, tmp = tempfile.mkstemp(dir=parent, prefix='.tmp-', suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, mode) as f:
            writer(f)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.remove(tmp)
        raise


def atomic_write(path: str, data: bytes):
    atomic_write_with(path, lambda f: f.write(data))


def save_csv(df: pd.DataFrame, path: str):
    """
    Guarda un DataFrame como CSV en la ruta dada, creando carpetas si es necesario.
    """
    atomic_write_with(path, lambda f: df.to_csv(f, index=False), mode='w')


def save_json(data: dict, path: str):
    """
    Guarda un diccionario como JSON en la ruta dada, creando carpetas si es necesario.
    """
    atomic_write_with(path, lambda f: json.dump(data, f, ensure_ascii=False, indent=2), mode='w')


# ---------------------------------------------------------------------------
# Ficheros de claves ICHK
# ---------------------------------------------------------------------------

def key_header(params: CkksParams) -> bytes:
    return KEY_MAGIC + struct.pack('<H', KEY_VERSION) + params.packed()


def parse_key_header(buf: bytes, path: str = '') -> Tuple[CkksParams, int]:
    """Devuelve los parámetros de la cabecera y el offset donde empieza la carga útil."""
    if len(buf) < 11 or buf[:4] != KEY_MAGIC:
        raise FormatError(f"Fichero de clave inválido (magic): {path}")
    version, n, chain = struct.unpack_from('<HIB', buf, 4)
    if version != KEY_VERSION:
        raise FormatError(f"Versión de clave no soportada {version}: {path}")
    offset = 11
    end = offset + 8 * chain + 9
    if len(buf) < end:
        raise FormatError(f"Cabecera de clave truncada: {path}")
    primes = struct.unpack_from(f'<{chain}Q', buf, offset)
    log_scale, sigma = struct.unpack_from('<Bd', buf, offset + 8 * chain)
    try:
        params = CkksParams(ring_degree=n, primes=primes, log_scale=log_scale, noise_std=sigma, name='file')
    except ValueError as exc:
        raise FormatError(f"Parámetros inválidos en {path}: {exc}") from exc
    return params, end


def encode_keys(keys: KeySet) -> dict:
    """Contenido binario de cada fichero de clave."""
    header = key_header(keys.params)
    public = header + b''.join(p.to_bytes() for p in keys.public)
    relin = header + b''.join(b.to_bytes() + a.to_bytes() for b, a in keys.relin)
    out = {'public.ichk': public, 'relin.ichk': relin}
    if keys.secret is not None:
        seed = (keys.seed or 0).to_bytes(SEED_BYTES, 'little')
        out['secret.ichk'] = header + keys.secret.astype('<i1').tobytes() + seed
    return out


def save_keys(keys: KeySet, outdir: str, force: bool = False) -> list:
    """
    Escribe secret/public/relin.ichk en outdir. Sin `force` se niega a
    sobrescribir. Todos los ficheros se preparan antes de renombrar ninguno.
    """
    blobs = encode_keys(keys)
    targets = {name: os.path.join(outdir, name) for name in blobs}
    existing = [p for p in targets.values() if os.path.exists(p)]
    if existing and not force:
        raise FileExistsError(f"Ya existen ficheros de clave (usa --force): {', '.join(existing)}")
    os.makedirs(outdir, exist_ok=True)

    staged = {}
    try:
        for name, data in blobs.items():
            fd, tmp = tempfile.mkstemp(dir=outdir, prefix='.tmp-', suffix=name)
            staged[name] = tmp
            with os.fdopen(fd, 'wb') as f:
                f.write(data)
        for name, tmp in staged.items():
            os.replace(tmp, targets[name])
    except BaseException:
        for tmp in staged.values():
            if os.path.exists(tmp):
                os.remove(tmp)
        raise
    return list(targets.values())


def _read(path: str) -> bytes:
    if not os.path.exists(path):
        raise FileNotFoundError(f"Fichero de clave no encontrado: {path}")
    with open(path, 'rb') as f:
        return f.read()


def _read_polys(buf: bytes, offset: int, params: CkksParams, count: int, path: str) -> list:
    ctx = context_for(params)
    limbs = len(params.primes)
    size = limbs * params.ring_degree * 8
    if len(buf) != offset + count * size:
        raise FormatError(f"Tamaño de fichero de clave inesperado: {path}")
    return [Poly.from_bytes(ctx, buf[offset + i * size:offset + (i + 1) * size], limbs) for i in range(count)]


def load_keys(keydir: str, require_secret: bool = True) -> KeySet:
    from scripts.ckks import relin_digit_count

    pub_path = os.path.join(keydir, 'public.ichk')
    buf = _read(pub_path)
    params, offset = parse_key_header(buf, pub_path)
    public = _read_polys(buf, offset, params, 2, pub_path)

    relin_path = os.path.join(keydir, 'relin.ichk')
    rbuf = _read(relin_path)
    rparams, roffset = parse_key_header(rbuf, relin_path)
    if rparams.packed() != params.packed():
        raise KeyMismatchError(f"relin.ichk y public.ichk tienen parámetros distintos en {keydir}")
    digits = relin_digit_count(params)
    flat = _read_polys(rbuf, roffset, params, 2 * digits, relin_path)
    relin = [(flat[2 * i], flat[2 * i + 1]) for i in range(digits)]

    secret, seed = None, None
    sec_path = os.path.join(keydir, 'secret.ichk')
    if require_secret or os.path.exists(sec_path):
        sbuf = _read(sec_path)
        sparams, soffset = parse_key_header(sbuf, sec_path)
        if sparams.packed() != params.packed():
            raise KeyMismatchError(f"secret.ichk y public.ichk tienen parámetros distintos en {keydir}")
        n = params.ring_degree
        if len(sbuf) != soffset + n + SEED_BYTES:
            raise FormatError(f"Tamaño de clave secreta inesperado: {sec_path}")
        secret = np.frombuffer(sbuf, dtype='<i1', count=n, offset=soffset).astype(np.int8)
        if np.any(np.abs(secret.astype(np.int16)) > 1):
            raise FormatError(f"La clave secreta no es ternaria: {sec_path}")
        seed = int.from_bytes(sbuf[soffset + n:], 'little')

    return KeySet(params=params, secret=secret, public=(public[0], public[1]), relin=relin, seed=seed)
