import pytest
from sympy import isprime

from scripts.errors import ParameterError
from scripts.params import (
    POOL_SIZE_ENV,
    WORKERS_ENV,
    CkksParams,
    generate_ntt_primes,
    load_params,
    resolve_pool_size,
    resolve_workers,
)

def test_default_preset():
    p = load_params('default')
    assert p.ring_degree == 4096
    assert p.primes == (137438822401, 68719403009, 68719230977)
    assert p.log_scale == 35
    assert p.max_level == 2
    # Q ≈ 2^109
    assert p.modulus().bit_length() == 109
    assert all(q % 8192 == 1 for q in p.primes)

def test_toy_alias():
    p = load_params('toy')
    assert p.name == 'toy_insecure'
    assert p.ring_degree == 16
    assert p.delta == 1024
    assert all(q.bit_length() == 20 for q in p.primes)

def test_unknown_preset():
    with pytest.raises(ParameterError):
        load_params('enorme')

def test_missing_params_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_params('default', str(tmp_path / 'no_existe.yml'))

def test_preset_with_prime_bits(tmp_path):
    path = tmp_path / 'params.yml'
    path.write_text("presets:\n  mini:\n    ring_degree: 16\n    prime_bits: [30, 30]\n    log_scale: 12\n")
    p = load_params('mini', str(path))
    assert len(p.primes) == 2
    assert p.primes[0] != p.primes[1]
    assert all(isprime(q) and q % 32 == 1 for q in p.primes)

def test_ring_degree_not_power_of_two():
    with pytest.raises(ParameterError):
        CkksParams(ring_degree=15, primes=(1048193,), log_scale=4)

def test_prime_not_ntt_friendly():
    # 1048573 es primo pero no ≡ 1 (mod 32)
    with pytest.raises(ParameterError):
        CkksParams(ring_degree=16, primes=(1048573, 1048193), log_scale=10)

def test_delta_must_be_below_primes():
    with pytest.raises(ParameterError):
        CkksParams(ring_degree=16, primes=(1048193, 1048129), log_scale=21)

def test_chain_too_short_for_one_multiplication():
    with pytest.raises(ParameterError):
        CkksParams(ring_degree=16, primes=(1048193,), log_scale=10)

def test_generate_ntt_primes():
    primes = generate_ntt_primes(16, 20, 3)
    assert len(primes) == 3
    assert primes == sorted(primes, reverse=True)
    for q in primes:
        assert isprime(q)
        assert q % 32 == 1
        assert 2 ** 19 <= q < 2 ** 20

def test_packed_header_length(toy_params, default_params):
    # N u32 + longitud u8 + primos u64 + log2Δ u8 + σ f64
    assert len(toy_params.packed()) == 4 + 1 + 2 * 8 + 1 + 8
    assert len(default_params.packed()) == 4 + 1 + 3 * 8 + 1 + 8

def test_summary_mentions_chain_bits(default_params):
    text = default_params.summary()
    assert 'N=4096' in text
    assert '37+36+36' in text

def test_resolve_pool_size(monkeypatch):
    monkeypatch.delenv(POOL_SIZE_ENV, raising=False)
    assert resolve_pool_size() == 1024
    monkeypatch.setenv(POOL_SIZE_ENV, '64')
    assert resolve_pool_size() == 64
    # el flag manda sobre la variable de entorno
    assert resolve_pool_size(8) == 8
    monkeypatch.setenv(POOL_SIZE_ENV, 'muchos')
    with pytest.raises(ParameterError):
        resolve_pool_size()
    with pytest.raises(ParameterError):
        resolve_pool_size(0)

def test_resolve_workers(monkeypatch):
    monkeypatch.setenv(WORKERS_ENV, '3')
    assert resolve_workers() == 3
    assert resolve_workers(1) == 1
    assert resolve_workers(0) == 1
