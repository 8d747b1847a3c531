import numpy as np
import pytest

from scripts import ckks
from scripts.cache import (
    CacheStrategy,
    PixelCaches,
    ZeroPool,
    build_caches,
    build_radix_cache,
    build_scan_cache,
    default_zero_mix,
    fresh_zero,
    decode_cache,
    draw_zero,
    encode_cache,
    encrypt_pixel,
    load_cache,
    radix_decompose,
    radix_length,
    randomize_radix,
    save_cache,
)
from scripts.ckks import add, decrypt_value, round_half_away, sub
from scripts.errors import (
    CacheMissError,
    DomainError,
    FormatError,
    KeyMismatchError,
    ParameterError,
    PoolError,
    UnsupportedError,
)

def _decrypt_int(ct, keys):
    return round_half_away(decrypt_value(ct, keys))

def test_radix_decompose():
    assert radix_decompose(255, 2) == [1] * 8
    assert radix_decompose(100, 10) == [0, 0, 1]
    assert radix_decompose(0, 3) == [0]
    assert radix_decompose(200, 3) == [2, 0, 1, 1, 2]

def test_radix_decompose_domain():
    with pytest.raises(DomainError):
        radix_decompose(256, 2)
    with pytest.raises(DomainError):
        radix_decompose(-1, 2)
    with pytest.raises(DomainError):
        radix_decompose(5, 1)

def test_radix_length():
    assert radix_length(2) == 8
    assert radix_length(3) == 6
    assert radix_length(10) == 3
    assert radix_length(16) == 2
    assert radix_length(256) == 1

def test_strategy_validation():
    with pytest.raises(ParameterError):
        CacheStrategy(tag='lru')
    with pytest.raises(ParameterError):
        CacheStrategy(tag='radix', radix=1)
    with pytest.raises(ParameterError):
        CacheStrategy(tag='full', pool_size=0)
    # 'none' no usa ni base ni pool
    assert CacheStrategy(tag='none', pool_size=0).code == 0

def test_strategy_uses_pool():
    assert CacheStrategy(tag='full').uses_pool
    assert not CacheStrategy(tag='full', randomness=False).uses_pool
    assert not CacheStrategy(tag='radix').uses_pool
    assert CacheStrategy(tag='radix', radix_zero_pool=True).uses_pool

def test_radix_cache_holds_powers(toy_keys, rng):
    cache = build_radix_cache(toy_keys, 3, rng)
    assert [_decrypt_int(ct, toy_keys) for ct in cache.powers] == [1, 3, 9, 27, 81, 243]

@pytest.mark.parametrize('r', [2, 3, 10])
def test_radix_oracle_every_pixel(toy_keys, r):
    rng = np.random.default_rng(r)
    caches = build_caches(CacheStrategy(tag='radix', radix=r), toy_keys, rng)
    for p in range(256):
        assert _decrypt_int(encrypt_pixel(p, caches, toy_keys, rng), toy_keys) == p

@pytest.mark.parametrize('r', [2, 3, 10])
def test_radix_without_randomness_is_digit_sum(toy_keys, r):
    rng = np.random.default_rng(r)
    caches = build_caches(CacheStrategy(tag='radix', radix=r, randomness=False), toy_keys, rng)
    powers = caches.radix.powers
    for p in range(1, 256, 7):
        # recomposición a mano: Σ d_j copias de Enc(r^j)
        expected = None
        for j, d in enumerate(radix_decompose(p, r)):
            for _ in range(d):
                expected = powers[j] if expected is None else add(expected, powers[j])
        got = encrypt_pixel(p, caches, toy_keys, rng)
        assert got.to_bytes() == expected.to_bytes()
        assert _decrypt_int(got, toy_keys) == p

def test_radix_zero_without_randomness(toy_keys, rng):
    caches = build_caches(CacheStrategy(tag='radix', radix=2, randomness=False), toy_keys, rng)
    ct = encrypt_pixel(0, caches, toy_keys, rng)
    assert _decrypt_int(ct, toy_keys) == 0
    # Enc(2) - 2·Enc(1)
    powers = caches.radix.powers
    assert ct.to_bytes() == sub(sub(powers[1], powers[0]), powers[0]).to_bytes()

def test_randomize_radix_with_forced_coins(toy_keys, rng):
    cache = build_radix_cache(toy_keys, 2, rng)
    ct = add(cache.powers[0], cache.powers[2])
    untouched = randomize_radix(ct, cache, rng, coins=[False] * 7)
    assert untouched.to_bytes() == ct.to_bytes()
    shuffled = randomize_radix(ct, cache, rng, coins=[True] * 7)
    assert shuffled.to_bytes() != ct.to_bytes()
    assert _decrypt_int(shuffled, toy_keys) == 5

def test_radix_needs_two_powers(toy_keys, rng):
    caches = build_caches(CacheStrategy(tag='radix', radix=256, randomness=False), toy_keys, rng)
    assert len(caches.radix.powers) == 1
    with pytest.raises(UnsupportedError):
        encrypt_pixel(0, caches, toy_keys, rng)
    with pytest.raises(UnsupportedError):
        randomize_radix(caches.radix.powers[0], caches.radix, rng)

def test_radix_with_zero_pool(toy_keys, rng):
    strategy = CacheStrategy(tag='radix', radix=2, pool_size=8, radix_zero_pool=True)
    caches = build_caches(strategy, toy_keys, rng)
    assert len(caches.pool) == 8
    for p in (0, 1, 128, 255):
        assert _decrypt_int(encrypt_pixel(p, caches, toy_keys, rng), toy_keys) == p
    assert caches.pool.draw_counter == 4 * default_zero_mix(8, toy_keys.params.ring_degree)

def test_scan_cache_coverage(toy_keys, gray_image, rng):
    values = build_scan_cache(gray_image, toy_keys, rng)
    assert values.coverage == frozenset(int(v) for v in np.unique(gray_image.pixels))
    top = build_scan_cache(gray_image, toy_keys, rng, top_k=2)
    # 90 aparece 4 veces; 7, 10 y 20 empatan a 2 y gana el menor
    assert top.coverage == frozenset({7, 90})
    caches = build_caches(CacheStrategy(tag='scan', pool_size=4), toy_keys, rng, image=gray_image)
    assert len(caches.pool) == 4

def test_scan_cache_miss(toy_keys, gray_image, rng):
    strategy = CacheStrategy(tag='scan', pool_size=4)
    caches = build_caches(strategy, toy_keys, rng, image=gray_image)
    with pytest.raises(CacheMissError) as exc:
        encrypt_pixel(11, caches, toy_keys, rng)
    assert exc.value.value == 11
    assert '11' in str(exc.value)

def test_scan_fallback_fresh(toy_keys, gray_image, rng):
    strategy = CacheStrategy(tag='scan', pool_size=4, fallback_fresh=True)
    caches = build_caches(strategy, toy_keys, rng, image=gray_image)
    before = ckks.counters.snapshot()['encryptions']
    assert _decrypt_int(encrypt_pixel(11, caches, toy_keys, rng), toy_keys) == 11
    assert ckks.counters.snapshot()['encryptions'] == before + 1

def test_scan_requires_image(toy_keys, rng):
    with pytest.raises(DomainError):
        build_caches(CacheStrategy(tag='scan'), toy_keys, rng)

def test_full_cache_never_encrypts_online(toy_keys, rng):
    caches = build_caches(CacheStrategy(tag='full', pool_size=16), toy_keys, rng)
    assert caches.values.coverage == frozenset(range(256))
    before = ckks.counters.snapshot()['encryptions']
    cts = [encrypt_pixel(p, caches, toy_keys, rng) for p in range(256)]
    assert ckks.counters.snapshot()['encryptions'] == before
    assert [_decrypt_int(ct, toy_keys) for ct in cts] == list(range(256))

def test_full_cache_without_randomness_is_lookup(toy_keys, rng):
    caches = build_caches(CacheStrategy(tag='full', randomness=False), toy_keys, rng)
    assert caches.pool is None
    a = encrypt_pixel(77, caches, toy_keys, rng)
    b = encrypt_pixel(77, caches, toy_keys, rng)
    assert a.to_bytes() == b.to_bytes() == caches.values.entries[77].to_bytes()
    assert a is not caches.values.entries[77]

def test_none_strategy_encrypts_fresh(toy_keys, rng):
    caches = PixelCaches(strategy=CacheStrategy(tag='none'))
    a = encrypt_pixel(3, caches, toy_keys, rng)
    b = encrypt_pixel(3, caches, toy_keys, rng)
    assert a.to_bytes() != b.to_bytes()

def test_pixel_out_of_range(toy_keys, rng):
    caches = PixelCaches(strategy=CacheStrategy(tag='none'))
    with pytest.raises(DomainError):
        encrypt_pixel(300, caches, toy_keys, rng)

def test_draw_zero(toy_keys, rng):
    with pytest.raises(PoolError):
        draw_zero(ZeroPool(()), rng)
    with pytest.raises(PoolError):
        draw_zero(None, rng)
    caches = build_caches(CacheStrategy(tag='full', pool_size=3), toy_keys, rng)
    z = draw_zero(caches.pool, rng)
    assert _decrypt_int(z, toy_keys) == 0
    assert caches.pool.draw_counter == 1
    assert all(z is not pz for pz in caches.pool.zeros)

def test_default_zero_mix():
    assert default_zero_mix(1024, 16) == 3
    assert default_zero_mix(1024, 4096) == 2
    assert default_zero_mix(8, 16) == 7
    # pool degenerado: se corta en el máximo
    assert default_zero_mix(1, 1) == 16
    assert CacheStrategy(tag='full').zero_mix is None
    with pytest.raises(ParameterError):
        CacheStrategy(tag='full', zero_mix=0)

def test_fresh_zero_term_count(toy_keys, rng):
    caches = build_caches(CacheStrategy(tag='full', pool_size=8), toy_keys, rng)
    z = fresh_zero(caches.pool, rng)
    assert caches.pool.draw_counter == 7
    assert _decrypt_int(z, toy_keys) == 0
    fresh_zero(caches.pool, rng, terms=2)
    assert caches.pool.draw_counter == 9
    with pytest.raises(PoolError):
        fresh_zero(ZeroPool(()), rng)

def test_draw_zero_is_uniform(toy_keys):
    rng = np.random.default_rng(31)
    caches = build_caches(CacheStrategy(tag='full', pool_size=16), toy_keys, rng)
    index = {z.to_bytes(): i for i, z in enumerate(caches.pool.zeros)}
    counts = np.zeros(16, dtype=int)
    for _ in range(10_000):
        counts[index[draw_zero(caches.pool, rng).to_bytes()]] += 1
    # 625 esperados por elemento, ±30%
    assert counts.min() >= 0.7 * 625
    assert counts.max() <= 1.3 * 625

@pytest.mark.slow
def test_cached_encryptions_never_repeat(toy_keys):
    rng = np.random.default_rng(2024)
    caches = build_caches(CacheStrategy(tag='full'), toy_keys, rng)
    seen = set()
    for i in range(100_000):
        ct = encrypt_pixel(128, caches, toy_keys, rng)
        seen.add(ct.to_bytes())
        if i % 1000 == 0:
            assert abs(decrypt_value(ct, toy_keys) - 128) < 0.5
    assert len(seen) == 100_000

# --- persistencia ICHC ---

def test_cache_file_roundtrip(toy_keys, rng, tmp_path):
    caches = build_caches(CacheStrategy(tag='full', pool_size=4), toy_keys, rng)
    path = tmp_path / 'full.ichc'
    save_cache(caches, str(path), toy_keys.fingerprint)
    loaded = load_cache(str(path), toy_keys.params, caches.strategy, toy_keys.fingerprint)
    assert encode_cache(loaded, toy_keys.fingerprint) == path.read_bytes()
    assert len(loaded.pool) == 4
    assert _decrypt_int(encrypt_pixel(200, loaded, toy_keys, rng), toy_keys) == 200

def test_radix_cache_file_roundtrip(toy_keys, rng, tmp_path):
    caches = build_caches(CacheStrategy(tag='radix', radix=3), toy_keys, rng)
    raw = encode_cache(caches, toy_keys.fingerprint)
    loaded = decode_cache(raw, toy_keys.params)
    assert loaded.strategy.tag == 'radix'
    assert loaded.radix.radix == 3
    assert [ct.to_bytes() for ct in loaded.radix.powers] == [ct.to_bytes() for ct in caches.radix.powers]

def test_cache_file_errors(toy_keys, rng, tmp_path):
    caches = build_caches(CacheStrategy(tag='full', pool_size=2), toy_keys, rng)
    raw = encode_cache(caches, toy_keys.fingerprint)
    with pytest.raises(FormatError):
        decode_cache(b'XXXX' + raw[4:], toy_keys.params)
    with pytest.raises(FormatError):
        decode_cache(raw[:-3], toy_keys.params)
    with pytest.raises(KeyMismatchError):
        decode_cache(raw, toy_keys.params, fingerprint=b'\x00' * 32)
    with pytest.raises(ParameterError):
        decode_cache(raw, toy_keys.params, strategy=CacheStrategy(tag='scan'))
    with pytest.raises(FileNotFoundError):
        load_cache(str(tmp_path / 'nada.ichc'), toy_keys.params)

def test_cache_file_without_pool(toy_keys, rng):
    caches = build_caches(CacheStrategy(tag='full', randomness=False), toy_keys, rng)
    loaded = decode_cache(encode_cache(caches, toy_keys.fingerprint), toy_keys.params)
    assert loaded.pool is None
    assert not loaded.strategy.randomness
    assert loaded.values.entries[9].to_bytes() == caches.values.entries[9].to_bytes()
