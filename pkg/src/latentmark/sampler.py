"""Distribution-preserving Gaussian sampling and the AWGN posterior."""

from __future__ import annotations

import math
import struct
from pathlib import Path

import numpy as np
from scipy import special

from ._util import as_rng

__all__ = [
    "DEFAULT_SHAPE",
    "DEFAULT_SIGMA",
    "quantile",
    "normal_cdf",
    "erf_eval",
    "dps_sample",
    "posterior_estimate",
    "posterior_scale",
    "split_channels",
    "merge_channels",
    "save_latent",
    "load_latent",
    "LatentFileError",
]

DEFAULT_SHAPE = (4, 64, 64)
DEFAULT_SIGMA = math.sqrt(1.5)

# Acklam's rational approximation, relative error 1.15e-9 before refinement
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425
_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)


def normal_cdf(x):
    return special.ndtr(x)


def erf_eval(x):
    return special.erf(x)


def _tail(p):
    q = np.sqrt(-2.0 * np.log(p))
    num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
    den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
    return num / den


def quantile(p):
    """Standard normal quantile, rational approximation plus one Newton step.

    Raises ``ValueError`` unless every ``p`` lies strictly inside (0, 1).
    """
    p = np.asarray(p, dtype=np.float64)
    if not np.all((p > 0.0) & (p < 1.0)):
        raise ValueError("quantile is defined on the open interval (0, 1)")
    scalar = p.ndim == 0
    p = np.atleast_1d(p)
    x = np.empty_like(p)

    lo = p < _P_LOW
    hi = p > 1.0 - _P_LOW
    mid = ~(lo | hi)

    q = p[mid] - 0.5
    r = q * q
    num = (((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    x[mid] = num / den
    x[lo] = _tail(p[lo])
    x[hi] = -_tail(1.0 - p[hi])

    # residual Phi(x) - p, written per region to avoid cancellation
    resid = np.empty_like(p)
    resid[mid] = 0.5 * special.erf(x[mid] / _SQRT2) - q
    resid[lo] = special.ndtr(x[lo]) - p[lo]
    resid[hi] = (1.0 - p[hi]) - special.ndtr(-x[hi])
    x = x - resid * _SQRT2PI * np.exp(0.5 * x * x)
    return x[0] if scalar else x


def dps_sample(symbols, v=1, rng=None):
    """Draw a latent whose element i is N(0, 1) conditioned on sign = symbol i.

    Symbol +1 selects the upper half-line, -1 the lower one; marginally over
    uniform symbols each element is exactly standard normal.
    """
    if v != 1:
        raise ValueError("only v = 1 is supported")
    symbols = np.asarray(symbols)
    if not np.all(np.abs(symbols) == 1):
        raise ValueError("symbols must be +1 or -1")
    rng = as_rng(rng)
    u = rng.random(symbols.shape)
    while True:
        zero = u == 0.0
        if not zero.any():
            break
        u[zero] = rng.random(int(zero.sum()))
    # z = ppf((u + i) / 2) with i = 1 for symbol +1, folded onto the lower
    # tail so that no element can round onto exactly zero
    a = np.where(symbols > 0, 1.0 - u, u)
    z = -symbols * quantile(0.5 * a)
    return z.astype(np.float32)


def posterior_scale(sigma=DEFAULT_SIGMA):
    return math.sqrt(2.0 * sigma**2 * (1.0 + sigma**2))


def posterior_estimate(z_prime, sigma=DEFAULT_SIGMA):
    """E[symbol | z'] under the AWGN model: ``erf(z' / sqrt(2 s^2 (1 + s^2)))``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    return special.erf(np.asarray(z_prime, dtype=np.float64) / posterior_scale(sigma))


def split_channels(t):
    t = np.asarray(t)
    ch = t.shape[0]
    if ch % 2:
        raise ValueError(f"cannot split {ch} channels in half")
    return t[: ch // 2], t[ch // 2 :]


def merge_channels(prc_part, gs_part):
    prc_part = np.asarray(prc_part)
    gs_part = np.asarray(gs_part)
    if prc_part.shape != gs_part.shape:
        raise ValueError("channel halves differ in shape")
    return np.concatenate([prc_part, gs_part], axis=0)


# -- latent file: "LTNT" | version u8 | ch h w u32 | ch*h*w float32, row-major

LATENT_MAGIC = b"LTNT"
LATENT_VERSION = 1


class LatentFileError(ValueError):
    pass


def save_latent(z, path):
    z = np.asarray(z, dtype="<f4")
    if z.ndim != 3:
        raise ValueError("latent must be 3-D (ch, h, w)")
    header = LATENT_MAGIC + struct.pack("<B3I", LATENT_VERSION, *z.shape)
    Path(path).write_bytes(header + np.ascontiguousarray(z).tobytes())


def load_latent(path):
    data = Path(path).read_bytes()
    if len(data) < 17:
        raise LatentFileError("latent file truncated in header")
    if data[:4] != LATENT_MAGIC:
        raise LatentFileError(f"bad latent magic {data[:4]!r}")
    version, ch, h, w = struct.unpack("<B3I", data[4:17])
    if version != LATENT_VERSION:
        raise LatentFileError(f"unsupported latent version {version}")
    body = data[17:]
    if len(body) != 4 * ch * h * w:
        raise LatentFileError(f"expected {ch * h * w} floats, found {len(body) // 4}")
    z = np.frombuffer(body, dtype="<f4").reshape(ch, h, w).astype(np.float32)
    if not np.all(np.isfinite(z)):
        raise LatentFileError("latent contains non-finite values")
    return z
