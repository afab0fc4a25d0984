import itertools
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from latentmark.gs import (
    GsParams,
    derive_stream_key,
    diffuse,
    gs_decode,
    gs_decode_exact_llr,
    gs_decode_hard,
    gs_decode_soft,
    gs_randomize,
    pack_payload,
    unpack_payload,
    user_info_bits,
)
from latentmark.keys import keygen_signature
from latentmark.sampler import DEFAULT_SIGMA, dps_sample, posterior_estimate

SHAPE = (4, 64, 64)
P = GsParams()


@pytest.fixture(scope="module")
def sig_keys():
    return keygen_signature(11)


def test_capacity_and_replication():
    assert P.num == 32
    assert P.capacity(SHAPE) == 256
    assert P.block_shape(SHAPE) == (1, 16, 16)


def test_shape_errors():
    with pytest.raises(ValueError):
        GsParams(f_hw=3).check_shape(SHAPE)
    with pytest.raises(ValueError):
        GsParams(v=2)


def test_thirdparty_payload_verifies(sig_keys):
    sk, vk = sig_keys
    bits = pack_payload(0x00000001, 256, sk, "thirdparty")
    assert bits.size == 256
    assert unpack_payload(bits, vk, "thirdparty") == (1, True)
    flipped = bits.copy()
    flipped[100] ^= 1
    assert unpack_payload(flipped, vk, "thirdparty") == (1, False)


def test_thirdparty_without_key():
    with pytest.raises(ValueError):
        pack_payload(1, 256, None, "thirdparty")


def test_operator_payload_tiles():
    bits = pack_payload(0xA5A5A5A5, 256)
    assert np.array_equal(bits, np.tile(user_info_bits(0xA5A5A5A5), 8))
    assert unpack_payload(bits) == (0xA5A5A5A5, None)


def test_operator_majority_survives_one_tile():
    bits = pack_payload(0x12345678, 256)
    bits[64:96] ^= 1
    assert unpack_payload(bits)[0] == 0x12345678


def test_diffuse_examples():
    assert not diffuse(np.zeros(256, np.uint8), P, SHAPE).any()
    one = np.zeros(256, np.uint8)
    one[0] = 1
    out = diffuse(one, P, SHAPE)
    assert out.shape == (2, 64, 64) and out.sum() == 32
    ident = GsParams(f_ch=1, f_hw=1)
    payload = np.random.default_rng(0).integers(0, 2, 2 * 64 * 64, dtype=np.uint8)
    assert np.array_equal(diffuse(payload, ident, SHAPE).ravel(), payload)


def test_stream_key_determinism_and_avalanche(rng):
    seed = rng.integers(0, 2, 32, dtype=np.uint8)
    sk_c = rng.integers(0, 2, 256, dtype=np.uint8)
    k1 = derive_stream_key(seed, sk_c, 8192)
    assert np.array_equal(k1, derive_stream_key(seed, sk_c, 8192))
    other = seed.copy()
    other[5] ^= 1
    agree = np.mean(k1 == derive_stream_key(other, sk_c, 8192))
    assert abs(agree - 0.5) < 0.02
    assert abs(k1.mean() - 0.5) < 0.02


def test_randomize_examples():
    sd = np.zeros((2, 4), np.uint8)
    assert np.all(gs_randomize(sd, np.zeros(8, np.uint8)) == 1)
    assert np.all(gs_randomize(np.ones(8, np.uint8), np.ones(8, np.uint8)) == 1)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_randomize_involution(s):
    rng = np.random.default_rng(s)
    sd = rng.integers(0, 2, (2, 64, 64), dtype=np.uint8)
    key = rng.integers(0, 2, sd.size, dtype=np.uint8)
    bits = (gs_randomize(sd, key) < 0).astype(np.uint8)
    assert np.array_equal(bits ^ key.reshape(sd.shape), sd)


@given(st.integers(0, 2**32 - 1), st.sampled_from(["soft", "exact", "hard"]))
@settings(max_examples=25, deadline=None)
def test_noiseless_roundtrip(s, method):
    rng = np.random.default_rng(s)
    payload = rng.integers(0, 2, 256, dtype=np.uint8)
    key = rng.integers(0, 2, 8192, dtype=np.uint8)
    soft = gs_randomize(diffuse(payload, P, SHAPE), key).astype(float)
    bits, llr = gs_decode(soft, key, P, SHAPE, method)
    assert np.array_equal(bits, payload)
    if method == "soft":
        assert np.all(np.abs(llr) == 2 * P.num)


def _one_bit_instance(values, key=None):
    """num = len(values) replicas of a single payload bit."""
    params = GsParams(f_ch=len(values), f_hw=1)
    shape = (2 * len(values), 1, 1)
    soft = np.asarray(values, dtype=float).reshape(len(values), 1, 1)
    key = np.zeros(len(values), np.uint8) if key is None else key
    return soft, key, params, shape


def test_tie_goes_to_zero():
    bits, llr = gs_decode_soft(*_one_bit_instance([0.0] * 4))
    assert bits[0] == 0 and llr[0] == 0


def test_mixed_replicas_arithmetic():
    soft = np.zeros((2, 64, 64))
    key = np.zeros(8192, np.uint8)
    # bit 0 sits at block position (0, 0, 0); its 32 replicas are the
    # (channel, y, x) positions (c, 16 a, 16 b)
    replicas = [(c, 16 * a, 16 * b) for c in range(2) for a in range(4) for b in range(4)]
    for k, pos in enumerate(replicas):
        soft[pos] = 0.3 if k < 20 else -0.6
    bits, llr = gs_decode_soft(soft, key, P, SHAPE)
    assert llr[0] == pytest.approx(2 * (6.0 - 7.2))
    assert bits[0] == 1
    assert not bits[1:].any()


def test_exact_and_first_order_diverge():
    inst = _one_bit_instance([0.99, -0.5, -0.5])
    exact_bits, exact_llr = gs_decode_exact_llr(*inst)
    soft_bits, soft_llr = gs_decode_soft(*inst)
    assert exact_llr[0] == pytest.approx(2 * (np.arctanh(0.99) - 2 * np.arctanh(0.5)))
    assert exact_bits[0] == 0 and soft_bits[0] == 1


def test_repetition_map_bruteforce():
    """Exact-LLR decoding equals MAP under independent replicas, num = 3.

    Each replica reports P(symbol = +1) = (1 + s) / 2; MAP compares the
    product of these over replicas against the product for symbol -1, in
    exact rational arithmetic.
    """
    levels = [Fraction(-9, 10), Fraction(-3, 10), Fraction(3, 10), Fraction(9, 10)]
    for vals in itertools.product(levels, repeat=3):
        for key_bits in itertools.product((0, 1), repeat=3):
            key = np.array(key_bits, np.uint8)
            observed = [float(v) for v in vals]
            # undo the stream key: replicas are s'_d = (-1)^k * s'
            dec = [v if k == 0 else -v for v, k in zip(vals, key_bits)]
            like0 = like1 = Fraction(1)
            for v in dec:
                like0 *= (1 + v) / 2
                like1 *= (1 - v) / 2
            map_bit = 0 if like0 >= like1 else 1
            bits, _ = gs_decode_exact_llr(*_one_bit_instance(observed, key))
            assert bits[0] == map_bit, (vals, key_bits)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_common_sign_replicas_agree(s):
    rng = np.random.default_rng(s)
    signs = np.where(rng.random(256) < 0.5, -1.0, 1.0)
    mags = rng.uniform(0, 1, (256, 32))
    block = signs[:, None] * mags  # (q, num)
    # scatter (q, num) back into the GS half using the diffusion layout
    soft = block.reshape(1, 16, 16, 2, 4, 4).transpose(3, 0, 4, 1, 5, 2).reshape(2, 64, 64)
    key = np.zeros(8192, np.uint8)
    a, _ = gs_decode_soft(soft, key, P, SHAPE)
    b, _ = gs_decode_exact_llr(soft, key, P, SHAPE)
    assert np.array_equal(a, b)
    assert np.array_equal(a, (signs < 0).astype(np.uint8))


def _bit_error_rate(params, sigma, trials, rng):
    q = params.capacity(SHAPE)
    errors = 0
    for _ in range(trials):
        payload = rng.integers(0, 2, q, dtype=np.uint8)
        key = rng.integers(0, 2, 8192, dtype=np.uint8)
        z = dps_sample(gs_randomize(diffuse(payload, params, SHAPE), key), 1, rng)
        soft = posterior_estimate(z + sigma * rng.standard_normal(z.shape), DEFAULT_SIGMA)
        bits, _ = gs_decode_soft(soft, key, params, SHAPE)
        errors += np.count_nonzero(bits != payload) / q
    return errors / trials


def test_error_rate_falls_with_replication():
    rng = np.random.default_rng(3)
    rates = [_bit_error_rate(GsParams(f_ch=fc, f_hw=fh), 3.0, 40, rng)
             for fc, fh in ((2, 2), (1, 4), (2, 4))]  # num = 8, 16, 32
    assert rates[0] > rates[2]
    assert rates[0] + 0.03 >= rates[1] and rates[1] + 0.03 >= rates[2], rates
