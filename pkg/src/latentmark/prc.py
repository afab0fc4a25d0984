"""PRC channel: LDPC-coded seed header with a BP-OSD decoder.

Bit/symbol convention throughout: bit 0 <-> symbol +1, bit 1 <-> symbol -1,
and a positive LLR favours bit 0.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from . import gf2
from ._util import as_rng

__all__ = [
    "DecoderConfig",
    "PrcDecodeResult",
    "prc_encode",
    "prc_decode",
    "prc_decode_details",
    "soft_to_llr",
    "belief_propagation",
    "osd",
    "syndrome",
]

_TANH_CLIP = 1.0 - 1e-15


@dataclass(frozen=True)
class DecoderConfig:
    bp_iters: int = 100
    osd_order: int = 0
    llr_clamp: float = 15.0
    fail_threshold: float = 0.35

    def __post_init__(self):
        if self.bp_iters < 0:
            raise ValueError("bp_iters must be >= 0")
        if self.osd_order not in (0, 1):
            raise ValueError("osd_order must be 0 or 1")
        if self.llr_clamp <= 0:
            raise ValueError("llr_clamp must be positive")
        if not 0 < self.fail_threshold <= 1:
            raise ValueError("fail_threshold must lie in (0, 1]")


class PrcDecodeResult(NamedTuple):
    seed: np.ndarray | None
    bp_converged: bool
    iterations: int
    discrepancy: float


def codeword_bits(ks, seed):
    seed = np.asarray(seed, dtype=np.uint8).ravel()
    if seed.size != ks.params.g:
        raise ValueError(f"seed must have {ks.params.g} bits, got {seed.size}")
    return ((ks.generator.astype(np.int64) @ seed.astype(np.int64)) & 1).astype(np.uint8)


def prc_encode(ks, seed, rng=None, eta=None):
    """Encode ``seed`` as ``(-1)**(G seed xor e)`` with ``e ~ Ber(n, eta)``.

    ``eta`` defaults to the key set's noise rate; ``rng`` is a seed or a
    numpy Generator and fixes the noise pattern.
    """
    bits = codeword_bits(ks, seed)
    eta = ks.params.eta if eta is None else eta
    if eta > 0:
        bits = bits ^ (as_rng(rng).random(bits.size) < eta).astype(np.uint8)
    return (1 - 2 * bits.astype(np.int8)).astype(np.int8)


def syndrome(ks, bits):
    bits = np.asarray(bits, dtype=np.uint8)
    return np.bitwise_xor.reduce(bits[ks.parity], axis=1)


def soft_to_llr(soft, clamp=15.0):
    """``2 artanh(soft)`` clamped to ``[-clamp, clamp]``."""
    soft = np.asarray(soft, dtype=np.float64)
    with np.errstate(divide="ignore"):
        llr = 2.0 * np.arctanh(np.clip(soft, -1.0, 1.0))
    return np.clip(llr, -clamp, clamp)


def belief_propagation(parity, n, llr, max_iters=100):
    """Sum-product decoding on the Tanner graph of a t-regular-row matrix.

    Returns (posterior LLRs, converged, iterations run).
    """
    parity = np.asarray(parity, dtype=np.intp)
    r, t = parity.shape
    flat = parity.ravel()
    c2v = np.zeros((r, t))
    for it in range(max_iters + 1):
        total = llr + np.bincount(flat, weights=c2v.ravel(), minlength=n)
        if not np.any(np.bitwise_xor.reduce(total[parity] < 0, axis=1)):
            return total, True, it
        if it == max_iters:
            break
        th = np.tanh(0.5 * (total[parity] - c2v))
        # product over the other t-1 edges of each check via prefix/suffix products
        left = np.ones_like(th)
        right = np.ones_like(th)
        for k in range(1, t):
            left[:, k] = left[:, k - 1] * th[:, k - 1]
            right[:, t - 1 - k] = right[:, t - k] * th[:, t - k]
        c2v = 2.0 * np.arctanh(np.clip(left * right, -_TANH_CLIP, _TANH_CLIP))
    return total, False, max_iters


def _info_set(rows, order, g):
    """First g positions in ``order`` whose generator rows are independent."""
    basis = {}
    picked = []
    for i in order:
        v = rows[i]
        while v:
            lead = v.bit_length() - 1
            if lead in basis:
                v ^= basis[lead]
            else:
                basis[lead] = v
                picked.append(int(i))
                break
        if len(picked) == g:
            return picked
    return None


def _inverse(a):
    """Inverse of a square invertible F2 matrix."""
    k = a.shape[0]
    aug = np.concatenate([a.astype(np.uint8), np.eye(k, dtype=np.uint8)], axis=1)
    reduced, pivots = gf2.rref(gf2.pack_rows(aug), 2 * k)
    if pivots[:k] != list(range(k)) or len(pivots) < k:
        raise np.linalg.LinAlgError("singular over F2")
    return gf2.unpack_rows(reduced[:k], 2 * k)[:, k:]


def osd(ks, reliability, channel_llr, order=0):
    """Ordered statistics decoding over the generator's column space.

    The g most reliable positions with independent generator rows form the
    information set; their hard decisions are solved for a seed and every
    candidate is scored by the channel-LLR weight of the positions where its
    re-encoding disagrees with the channel's hard decisions.

    Returns (seed bits, normalised weighted discrepancy).
    """
    g = ks.params.g
    order_idx = np.argsort(-np.abs(reliability), kind="stable")
    info = _info_set(ks.generator_ints, order_idx, g)
    if info is None:
        return None, 1.0
    hard = (np.asarray(reliability) < 0).astype(np.uint8)
    inv = _inverse(ks.generator[info])
    seed = gf2.matmul(inv, hard[info][:, None])[:, 0]
    candidates = [seed]
    if order >= 1:
        candidates += [seed ^ inv[:, k] for k in range(g)]
    cand = np.stack(candidates, axis=1)
    words = gf2.matmul(ks.generator, cand)
    chan_hard = (np.asarray(channel_llr) < 0).astype(np.uint8)
    weight = np.abs(channel_llr)
    total = weight.sum()
    disc = weight @ (words != chan_hard[:, None])
    best = int(np.argmin(disc))
    return cand[:, best].astype(np.uint8), float(disc[best] / total) if total > 0 else 1.0


def prc_decode_details(ks, soft, cfg=DecoderConfig()):
    """BP-OSD decode of posterior expectations ``soft`` with diagnostics.

    Soft values are first divided by their peak magnitude, so any positive
    rescaling of the input decodes identically; posterior inputs already
    peak near 1, where this is close to a no-op. The encoder's
    Bernoulli(eta) flips are then folded into the channel by shrinking each
    expectation by ``1 - 2 eta`` before the LLR conversion.
    """
    soft = np.asarray(soft, dtype=np.float64).ravel()
    n = ks.params.n
    if soft.size != n:
        raise ValueError(f"soft vector must have length {n}, got {soft.size}")
    peak = np.max(np.abs(soft))
    if not np.isfinite(peak):
        raise ValueError("soft values must be finite")
    if peak > 0:
        soft = soft / peak
    llr = soft_to_llr(soft * (1.0 - 2.0 * ks.params.eta), cfg.llr_clamp)
    post, converged, iters = belief_propagation(ks.parity, n, llr, cfg.bp_iters)
    seed, disc = osd(ks, post, llr, cfg.osd_order)
    if seed is None or not disc < cfg.fail_threshold:
        return PrcDecodeResult(None, converged, iters, disc)
    return PrcDecodeResult(seed, converged, iters, disc)


def prc_decode(ks, soft, cfg=DecoderConfig()):
    """Recover the seed from soft information; ``None`` signals failure."""
    return prc_decode_details(ks, soft, cfg).seed
