"""GS channel: replicated, stream-cipher-randomised payload and its decoders."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms

from .keys import SIGNATURE_BITS, USER_INFO_BITS, sign_user_info, verify_user_info
from .prc import soft_to_llr

__all__ = [
    "GsParams",
    "MODES",
    "pack_payload",
    "unpack_payload",
    "user_info_bits",
    "bits_to_int",
    "diffuse",
    "derive_stream_key",
    "gs_randomize",
    "gs_decode_soft",
    "gs_decode_exact_llr",
    "gs_decode_hard",
    "gs_decode",
    "DECODERS",
]

MODES = ("operator", "thirdparty")


@dataclass(frozen=True)
class GsParams:
    f_ch: int = 2
    f_hw: int = 4
    v: int = 1

    def __post_init__(self):
        if self.v != 1:
            raise ValueError("only v = 1 (one bit per latent element) is supported")
        if self.f_ch < 1 or self.f_hw < 1:
            raise ValueError("replication factors must be >= 1")

    @property
    def num(self):
        """Replicas per payload bit."""
        return self.f_ch * self.f_hw**2

    def check_shape(self, shape):
        ch, h, w = shape
        if ch % 2:
            raise ValueError("channel count must be even")
        if (ch // 2) % self.f_ch:
            raise ValueError(f"ch/2={ch // 2} is not divisible by f_ch={self.f_ch}")
        if h % self.f_hw or w % self.f_hw:
            raise ValueError(f"h={h}, w={w} must be divisible by f_hw={self.f_hw}")

    def block_shape(self, shape):
        """Shape of one copy of the payload inside the GS half."""
        self.check_shape(shape)
        ch, h, w = shape
        return (ch // 2 // self.f_ch, h // self.f_hw, w // self.f_hw)

    def capacity(self, shape):
        return int(np.prod(self.block_shape(shape)))


def user_info_bits(user_info):
    """32-bit integer to bits, most significant first."""
    user_info = int(user_info)
    if not 0 <= user_info < 2**USER_INFO_BITS:
        raise ValueError("user_info must fit in 32 bits")
    return np.array([(user_info >> k) & 1 for k in range(USER_INFO_BITS - 1, -1, -1)],
                    dtype=np.uint8)


def bits_to_int(bits):
    out = 0
    for b in np.asarray(bits, dtype=np.uint8):
        out = (out << 1) | int(b)
    return out


def pack_payload(user_info, q=256, signing_key=None, mode="operator", signature=None):
    """Build the q-bit watermark for one user.

    Operator mode tiles the 32 info bits to fill q. Third-party mode appends
    the 224-bit ECDSA signature (computed with ``signing_key`` unless a stored
    ``signature`` is given) and requires q = 256.
    """
    info = user_info_bits(user_info)
    if mode == "operator":
        if q % USER_INFO_BITS:
            raise ValueError(f"q={q} is not a multiple of {USER_INFO_BITS}")
        return np.tile(info, q // USER_INFO_BITS)
    if mode != "thirdparty":
        raise ValueError(f"unknown mode {mode!r}")
    if q != USER_INFO_BITS + SIGNATURE_BITS:
        raise ValueError(f"third-party payloads are {USER_INFO_BITS + SIGNATURE_BITS} bits, q={q}")
    if signature is None:
        if signing_key is None:
            raise ValueError("third-party mode needs the ECDSA signing key")
        signature = sign_user_info(signing_key, user_info)
    return np.concatenate([info, np.asarray(signature, dtype=np.uint8)])


def unpack_payload(bits, verifying_key=None, mode="operator"):
    """Recover (user_info, signature_valid).

    ``signature_valid`` is ``None`` in operator mode, where the info is a
    per-position majority vote over the tiles (ties to 0).
    """
    bits = np.asarray(bits, dtype=np.uint8)
    if mode == "operator":
        tiles = bits.reshape(-1, USER_INFO_BITS)
        votes = tiles.sum(axis=0)
        return bits_to_int((2 * votes > tiles.shape[0]).astype(np.uint8)), None
    if mode != "thirdparty":
        raise ValueError(f"unknown mode {mode!r}")
    info = bits_to_int(bits[:USER_INFO_BITS])
    if verifying_key is None:
        return info, False
    return info, verify_user_info(verifying_key, info, bits[USER_INFO_BITS:])


def diffuse(payload_bits, params, shape):
    """Tile the payload across the GS half, shape (ch/2, h, w).

    The payload is laid out as a (ch/2/f_ch, h/f_hw, w/f_hw) block and
    repeated f_ch times along channels and f_hw times along each spatial axis.
    """
    block = params.block_shape(shape)
    payload_bits = np.asarray(payload_bits, dtype=np.uint8)
    if payload_bits.size != int(np.prod(block)):
        raise ValueError(f"payload has {payload_bits.size} bits, capacity is {int(np.prod(block))}")
    return np.tile(payload_bits.reshape(block), (params.f_ch, params.f_hw, params.f_hw))


def _gather(values, params, shape):
    """Group a GS-half tensor as (q, num) replicas per payload bit."""
    c, y, x = params.block_shape(shape)
    grid = np.asarray(values).reshape(params.f_ch, c, params.f_hw, y, params.f_hw, x)
    return grid.transpose(1, 3, 5, 0, 2, 4).reshape(c * y * x, params.num)


def derive_stream_key(seed, sk_c, length):
    """Keystream bits: ChaCha20 keyed by SHA-256(seed || sk_c), zero nonce."""
    seed_bytes = np.packbits(np.asarray(seed, dtype=np.uint8)).tobytes()
    sk_bytes = np.packbits(np.asarray(sk_c, dtype=np.uint8)).tobytes()
    key = hashlib.sha256(seed_bytes + sk_bytes).digest()
    enc = Cipher(algorithms.ChaCha20(key, bytes(16)), mode=None).encryptor()
    stream = enc.update(bytes((length + 7) // 8))
    return np.unpackbits(np.frombuffer(stream, dtype=np.uint8), count=length)


def gs_randomize(sd, key):
    """Symbols ``(-1)**(sd xor key)`` with the diffused watermark's shape."""
    sd = np.asarray(sd, dtype=np.uint8)
    key = np.asarray(key, dtype=np.uint8)
    if key.size != sd.size:
        raise ValueError(f"stream key has {key.size} bits, watermark has {sd.size}")
    m_e = sd ^ key.reshape(sd.shape)
    return (1 - 2 * m_e.astype(np.int8)).astype(np.int8)


def _decrypt(soft_gs, key):
    soft_gs = np.asarray(soft_gs, dtype=np.float64)
    key = np.asarray(key, dtype=np.uint8).reshape(soft_gs.shape)
    return np.where(key == 1, -soft_gs, soft_gs)


def _decide(llr_total):
    return (llr_total < 0).astype(np.uint8), llr_total


def gs_decode_soft(soft_gs, key, params, shape):
    """First-order soft decoding: per bit, sum ``2 s'`` over its replicas."""
    replicas = _gather(_decrypt(soft_gs, key), params, shape)
    return _decide(2.0 * replicas.sum(axis=1))


def gs_decode_exact_llr(soft_gs, key, params, shape, clamp=15.0):
    """Full-LLR soft decoding: per bit, sum ``2 artanh(s')`` over its replicas."""
    replicas = _gather(_decrypt(soft_gs, key), params, shape)
    return _decide(soft_to_llr(replicas, clamp).sum(axis=1))


def gs_decode_hard(soft_gs, key, params, shape):
    """Majority vote over replica signs; the vote margin stands in for the LLR."""
    replicas = _gather(_decrypt(soft_gs, key), params, shape)
    return _decide(np.sign(replicas).sum(axis=1))


DECODERS = {
    "soft": gs_decode_soft,
    "exact": gs_decode_exact_llr,
    "hard": gs_decode_hard,
}


def gs_decode(soft_gs, key, params, shape, method="soft"):
    try:
        decoder = DECODERS[method]
    except KeyError:
        raise ValueError(f"unknown decoder {method!r}; choose from {sorted(DECODERS)}") from None
    return decoder(soft_gs, key, params, shape)
