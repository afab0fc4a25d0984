"""End-to-end embedding and extraction over both latent channels."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from ._util import as_rng
from .gs import DECODERS, GsParams, derive_stream_key, diffuse, gs_decode, gs_randomize, unpack_payload
from .prc import DecoderConfig, prc_decode_details, prc_encode
from .sampler import DEFAULT_SHAPE, DEFAULT_SIGMA, dps_sample, merge_channels, posterior_estimate, split_channels
from .stats import audit_normality

__all__ = [
    "WatermarkConfig",
    "Embedding",
    "Extraction",
    "embed",
    "extract",
    "seed_fingerprint",
    "watermarked_elements",
    "audit_embeddings",
]


@dataclass(frozen=True)
class WatermarkConfig:
    shape: tuple = DEFAULT_SHAPE
    gs: GsParams = field(default_factory=GsParams)
    mode: str = "operator"
    decoder: DecoderConfig = field(default_factory=DecoderConfig)
    method: str = "soft"
    sigma: float = DEFAULT_SIGMA

    @property
    def q(self):
        return self.gs.capacity(self.shape)

    @property
    def half_shape(self):
        ch, h, w = self.shape
        return (ch // 2, h, w)

    def check(self, ks):
        """Cross-field consistency against a key set; raises ValueError."""
        ch, h, w = self.shape
        self.gs.check_shape(self.shape)
        if ks.params.n != ch * h * w // 2:
            raise ValueError(f"key set has n={ks.params.n}, latent half has {ch * h * w // 2} elements")
        if self.mode not in ("operator", "thirdparty"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.method not in DECODERS:
            raise ValueError(f"unknown decoder {self.method!r}")
        if self.mode == "thirdparty":
            if self.q != 256:
                raise ValueError(f"third-party mode needs q=256, configuration gives q={self.q}")
            if not ks.has_signature_keys:
                raise ValueError("third-party mode needs ECDSA keys in the key set")
        elif self.q % 32:
            raise ValueError(f"operator mode needs q divisible by 32, got {self.q}")


@dataclass
class Embedding:
    latent: np.ndarray
    seed: np.ndarray

    @property
    def fingerprint(self):
        return seed_fingerprint(self.seed)


@dataclass
class Extraction:
    seed: np.ndarray | None
    bits: np.ndarray
    llr_total: np.ndarray
    discrepancy: float
    bits_by_method: dict = field(default_factory=dict)
    gs_positive_fraction: float = 0.5
    gs_mean_abs_posterior: float = 0.0

    @property
    def header_ok(self):
        return self.seed is not None

    def payload(self, verifying_key=None, mode="operator"):
        return unpack_payload(self.bits, verifying_key, mode)


def seed_fingerprint(seed):
    """First 8 hex chars of SHA-256 over the packed seed."""
    return hashlib.sha256(np.packbits(np.asarray(seed, dtype=np.uint8)).tobytes()).hexdigest()[:8]


def embed(ks, payload_bits, cfg=WatermarkConfig(), rng=None, zero_stream_key=False):
    """Sample a watermarked latent carrying a fresh seed and ``payload_bits``.

    ``zero_stream_key`` disables the GS randomisation; it exists only to
    demonstrate what the latent audit catches without it.
    """
    rng = as_rng(rng)
    seed = rng.integers(0, 2, size=ks.params.g, dtype=np.uint8)
    m_prc = prc_encode(ks, seed, rng).reshape(cfg.half_shape)
    sd = diffuse(payload_bits, cfg.gs, cfg.shape)
    if zero_stream_key:
        key = np.zeros(sd.size, dtype=np.uint8)
    else:
        key = derive_stream_key(seed, ks.sk_c, sd.size)
    m_gs = gs_randomize(sd, key)
    z = dps_sample(merge_channels(m_prc, m_gs), 1, rng)
    return Embedding(z, seed)


def extract(ks, latent, cfg=WatermarkConfig(), methods=None):
    """Posterior estimate, BP-OSD on the PRC half, decrypt and decode the GS half.

    On header failure the GS half is decoded with an all-zero key, so the
    returned bits are diagnostics only (``header_ok`` is False).
    """
    latent = np.asarray(latent)
    if latent.shape != tuple(cfg.shape):
        raise ValueError(f"latent shape {latent.shape} != configured {tuple(cfg.shape)}")
    soft = posterior_estimate(latent, cfg.sigma)
    soft_prc, soft_gs = split_channels(soft)
    res = prc_decode_details(ks, soft_prc.ravel(), cfg.decoder)
    if res.seed is not None:
        key = derive_stream_key(res.seed, ks.sk_c, soft_gs.size)
    else:
        key = np.zeros(soft_gs.size, dtype=np.uint8)
    methods = tuple(methods) if methods else (cfg.method,)
    if cfg.method not in methods:
        methods = (cfg.method,) + methods
    by_method = {}
    llr = None
    for m in methods:
        bits, totals = gs_decode(soft_gs, key, cfg.gs, cfg.shape, m)
        by_method[m] = bits
        if m == cfg.method:
            llr = totals
    return Extraction(
        seed=res.seed,
        bits=by_method[cfg.method],
        llr_total=llr,
        discrepancy=res.discrepancy,
        bits_by_method=by_method,
        gs_positive_fraction=float(np.mean(soft_gs > 0)),
        gs_mean_abs_posterior=float(np.mean(np.abs(soft_gs))),
    )


def watermarked_elements(ks, payload_bits, n_latents, cfg=WatermarkConfig(), rng_seed=0,
                         zero_stream_key=False):
    """Flattened elements of ``n_latents`` embeds sharing one payload, fresh seeds each."""
    if n_latents < 1:
        raise ValueError("n_latents must be >= 1")
    children = np.random.SeedSequence(rng_seed).spawn(n_latents)
    return np.concatenate([
        embed(ks, payload_bits, cfg, child, zero_stream_key=zero_stream_key).latent.ravel()
        for child in children
    ])


def audit_embeddings(ks, payload_bits, n_latents, cfg=WatermarkConfig(), rng_seed=0,
                     zero_stream_key=False):
    """Normality audit over watermarked latents carrying a fixed payload."""
    return audit_normality(watermarked_elements(ks, payload_bits, n_latents, cfg, rng_seed,
                                                zero_stream_key))
