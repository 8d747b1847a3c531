import math

import numpy as np
import pytest

from scripts import ckks
from scripts.ckks import (
    Ciphertext,
    Plaintext,
    add,
    add_plain,
    decode,
    decode_scalar,
    decrypt,
    decrypt_value,
    encode_scalar,
    encode_vector,
    encrypt_value,
    keygen,
    measure_noise,
    mul,
    mul_plain,
    relinearize,
    rescale,
    round_half_away,
    sub,
)
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

def _key_bytes(keys):
    return (keys.secret.tobytes(),
            b''.join(p.to_bytes() for p in keys.public),
            b''.join(b.to_bytes() + a.to_bytes() for b, a in keys.relin))

def test_keygen_is_deterministic(toy_params):
    assert _key_bytes(keygen(toy_params, seed=0)) == _key_bytes(keygen(toy_params, seed=0))
    assert _key_bytes(keygen(toy_params, seed=0)) != _key_bytes(keygen(toy_params, seed=1))

def test_secret_is_ternary(toy_keys):
    s = toy_keys.secret
    assert s.shape == (16,)
    assert set(np.unique(s)) <= {-1, 0, 1}
    assert s.any()

def test_public_key_relation(toy_keys, toy_params):
    # pk0 + pk1·s = e, con |e| <= 6σ
    pk0, pk1 = toy_keys.public
    s = toy_keys.secret_ntt(2)
    e = (pk0 + (pk1.to_ntt() * s).to_coeff()).to_integers()
    assert max(abs(int(x)) for x in e) <= 6 * toy_params.noise_std

def test_relin_digit_count(default_params, toy_params):
    assert ckks.relin_digit_count(default_params) == 7
    assert ckks.relin_digit_count(toy_params) == 3
    assert ckks.relin_digit_count(default_params, level=0) == 3

def test_round_half_away():
    assert round_half_away(2.5) == 3
    assert round_half_away(-2.5) == -3
    assert round_half_away(0.49) == 0
    assert round_half_away(254.6) == 255

def test_encode_scalar_roundtrip(toy_params):
    pt = encode_scalar(3.7, toy_params)
    assert pt.constant == round(3.7 * 1024)
    assert abs(decode_scalar(pt) - 3.7) <= 1 / 1024

def test_encode_vector_roundtrip(default_params):
    values = [1.5, -2.25, 100.0, 0.001, 255.0]
    got = decode(encode_vector(values, default_params))
    assert np.allclose(got[:5].real, values, atol=1e-5)
    assert np.allclose(got[5:], 0, atol=1e-5)
    assert np.allclose(got.imag, 0, atol=1e-5)

def test_encoded_vectors_multiply_slotwise():
    # N=16 con primos anchos: el producto negacíclico es producto por slots
    params = CkksParams(ring_degree=16, primes=(137438822401, 68719403009, 68719230977), log_scale=30)
    v1 = np.array([1.0, 2.0, -3.0, 0.5, 10.0, 0.0, 7.0, -1.0])
    v2 = np.array([4.0, 0.5, 2.0, 2.0, -1.0, 9.0, 1.0, 1.0])
    p1, p2 = encode_vector(v1, params), encode_vector(v2, params)
    prod = Plaintext(p1.poly * p2.poly, p1.scale * p2.scale, p1.level)
    assert np.allclose(decode(prod).real, v1 * v2, atol=1e-4)

def test_encode_vector_too_long(toy_params):
    with pytest.raises(DimensionError):
        encode_vector(np.ones(9), toy_params)

def test_encode_overflow(toy_params):
    with pytest.raises(EncodingOverflowError):
        encode_scalar(2.0 ** 40, toy_params)

def test_encrypt_decrypt_every_pixel(toy_keys, rng):
    for p in range(256):
        value = decrypt_value(encrypt_value(p, toy_keys, rng), toy_keys)
        assert abs(value - p) < 0.5

def test_fresh_noise_bound(toy_keys, toy_params, rng):
    ct = encrypt_value(0, toy_keys, rng)
    bound = 2 ** 6 * toy_params.noise_std * math.sqrt(toy_params.ring_degree)
    assert measure_noise(ct, toy_keys, 0) < bound

def test_noise_doubles_under_self_addition(toy_keys, rng):
    ct = encrypt_value(77, toy_keys, rng)
    assert measure_noise(add(ct, ct), toy_keys, 154) == 2 * measure_noise(ct, toy_keys, 77)

def test_add_sub_plain_ops(toy_keys, rng):
    a = encrypt_value(100, toy_keys, rng)
    b = encrypt_value(50, toy_keys, rng)
    assert round_half_away(decrypt_value(add(a, b), toy_keys)) == 150
    assert round_half_away(decrypt_value(sub(a, b), toy_keys)) == 50
    assert round_half_away(decrypt_value(sub(b, a), toy_keys)) == -50
    shift = encode_scalar(25, toy_keys.params)
    assert round_half_away(decrypt_value(add_plain(a, shift), toy_keys)) == 125

def test_mul_plain_scalar_and_vector(toy_keys, rng):
    ct = encrypt_value(10, toy_keys, rng)
    doubled = mul_plain(ct, encode_scalar(2.0, toy_keys.params))
    assert doubled.scale == 2.0 ** 20
    assert abs(decrypt_value(doubled, toy_keys) - 20) < 0.05
    twos = mul_plain(ct, encode_vector(np.full(8, 2.0), toy_keys.params))
    assert abs(decrypt_value(twos, toy_keys) - 20) < 0.05

def test_level_mismatch(toy_keys, rng):
    a = encrypt_value(3, toy_keys, rng)
    b = rescale(mul_plain(encrypt_value(1, toy_keys, rng), encode_scalar(1.0, toy_keys.params)))
    with pytest.raises(LevelError):
        add(a, b)

def test_scale_mismatch(toy_keys, rng):
    a = encrypt_value(3, toy_keys, rng)
    b = Ciphertext(a.parts, a.scale * 2, a.level)
    with pytest.raises(ScaleError):
        sub(a, b)

def test_scale_overflow(toy_keys, rng):
    ct = encrypt_value(1, toy_keys, rng)
    with pytest.raises(ScaleError):
        mul_plain(ct, encode_scalar(1.0, toy_keys.params, scale=2.0 ** 30))

def test_rescale_at_level_zero(toy_keys, rng):
    ct = rescale(mul_plain(encrypt_value(4, toy_keys, rng), encode_scalar(1.0, toy_keys.params)))
    assert ct.level == 0
    with pytest.raises(LevelExhaustedError):
        rescale(ct)

def test_mul_rejects_degree_two(toy_keys, rng):
    a = encrypt_value(2, toy_keys, rng)
    sq = mul(a, a)
    assert sq.degree == 2
    with pytest.raises(UnsupportedError):
        mul(sq, a)

def test_foreign_keys_rejected(toy_keys, default_keys, rng):
    ct = encrypt_value(5, toy_keys, rng)
    with pytest.raises(KeyMismatchError):
        decrypt(ct, default_keys)

def test_ciphertext_needs_two_or_three_parts(toy_keys, rng):
    ct = encrypt_value(5, toy_keys, rng)
    with pytest.raises(FormatError):
        Ciphertext(ct.parts * 2, ct.scale, ct.level)

def test_ciphertext_bytes_roundtrip(toy_keys, rng):
    ct = encrypt_value(42, toy_keys, rng)
    raw = ct.to_bytes()
    # grado u8, nivel u8, escala f64, 2 partes × 2 limbs × 16 × u64
    assert len(raw) == 10 + 2 * 2 * 16 * 8
    back, offset = Ciphertext.from_bytes(toy_keys.ctx, raw)
    assert offset == len(raw)
    assert back.to_bytes() == raw
    with pytest.raises(FormatError):
        Ciphertext.from_bytes(toy_keys.ctx, raw[:-1])
    with pytest.raises(FormatError):
        Ciphertext.from_bytes(toy_keys.ctx, b'\x05' + raw[1:])

def test_relinearize_with_foreign_keys(toy_keys, default_keys, rng):
    a = encrypt_value(3, toy_keys, rng)
    with pytest.raises(KeyMismatchError):
        relinearize(mul(a, a), default_keys)

def test_adding_encrypted_zero_is_neutral(toy_keys):
    rng = np.random.default_rng(31)
    for p in rng.integers(0, 256, size=1000):
        ct = encrypt_value(p, toy_keys, rng)
        zero = encrypt_value(0, toy_keys, rng)
        assert round_half_away(decrypt_value(add(ct, zero), toy_keys)) == p

def test_fresh_encryptions_are_distinct(toy_keys, rng):
    seen = {encrypt_value(128, toy_keys, rng).to_bytes() for _ in range(100)}
    assert len(seen) == 100

def test_counters_track_encryptions(toy_keys, rng):
    before = ckks.counters.snapshot()
    ct = encrypt_value(1, toy_keys, rng)
    decrypt_value(ct, toy_keys)
    after = ckks.counters.snapshot()
    assert after['encryptions'] == before['encryptions'] + 1
    assert after['decryptions'] == before['decryptions'] + 1

@pytest.mark.slow
def test_homomorphic_oracle_default_params(default_keys):
    # pares aleatorios de píxeles frente a la aritmética en claro
    rng = np.random.default_rng(99)
    params = default_keys.params
    for p, q in rng.integers(0, 256, size=(100, 2)):
        a = encrypt_value(p, default_keys, rng)
        b = encrypt_value(q, default_keys, rng)
        assert abs(decrypt_value(add(a, b), default_keys) - (p + q)) < 0.01
        assert abs(decrypt_value(sub(a, b), default_keys) - (p - q)) < 0.01
        k = float(rng.uniform(0.1, 3.0))
        scaled = rescale(mul_plain(a, encode_scalar(k, params)))
        assert abs(decrypt_value(scaled, default_keys) - p * k) <= 0.001 * max(1.0, p * k)

@pytest.mark.slow
def test_ciphertext_multiplication_default_params(default_keys):
    rng = np.random.default_rng(5)
    for p, q in rng.integers(0, 256, size=(10, 2)):
        a = encrypt_value(p, default_keys, rng)
        b = encrypt_value(q, default_keys, rng)
        prod = mul(a, b)
        direct = decrypt_value(prod, default_keys)
        relin = relinearize(prod, default_keys)
        assert relin.degree == 1
        assert abs(decrypt_value(relin, default_keys) - direct) < 1e-3
        out = rescale(relin)
        assert out.level == a.level - 1
        assert math.isclose(out.scale, a.scale * b.scale / default_keys.params.primes[-1])
        assert abs(decrypt_value(out, default_keys) - p * q) < 0.1

@pytest.mark.slow
def test_relinearize_passes_degree_one_through(default_keys, rng):
    ct = encrypt_value(9, default_keys, rng)
    assert relinearize(ct, default_keys) is ct
