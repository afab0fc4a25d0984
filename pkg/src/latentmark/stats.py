"""Detection and traceability tests, threshold calibration, latent audits."""

from __future__ import annotations

import math
from typing import NamedTuple

import numpy as np
from scipy import stats as sps
from scipy.special import logsumexp

from ._util import as_rng
from .keys import pack_bits64

__all__ = [
    "acc",
    "fpr_detection",
    "fpr_detection_table",
    "fpr_traceability",
    "fpr_traceability_approx",
    "calibrate_tau",
    "TraceResult",
    "trace",
    "NormalityReport",
    "audit_normality",
    "audit_posterior",
    "binomial_interval",
]


def acc(s, s_prime):
    """Number of positions where two bit strings agree."""
    s = np.asarray(s, dtype=np.uint8)
    s_prime = np.asarray(s_prime, dtype=np.uint8)
    if s.shape != s_prime.shape:
        raise ValueError(f"length mismatch: {s.shape} vs {s_prime.shape}")
    return int(np.count_nonzero(s == s_prime))


def _log_pmf_half(q):
    k = np.arange(q + 1)
    return (math.lgamma(q + 1) - np.array([math.lgamma(i + 1) + math.lgamma(q - i + 1) for i in k])
            - q * math.log(2.0))


def fpr_detection_table(q):
    """FPR(tau) for every tau in 0..q, i.e. P[Binomial(q, 1/2) > tau]."""
    logp = _log_pmf_half(q)
    # tail[tau] = logsumexp(logp[tau+1:])
    tail = np.full(q + 1, -np.inf)
    for tau in range(q - 1, -1, -1):
        tail[tau] = np.logaddexp(tail[tau + 1], logp[tau + 1])
    return np.exp(tail)


def fpr_detection(q, tau):
    """P[Acc > tau] for Acc ~ Binomial(q, 1/2), summed in log space."""
    if not 0 <= tau <= q:
        raise ValueError("tau must lie in [0, q]")
    if tau == q:
        return 0.0
    logp = _log_pmf_half(q)
    return float(np.exp(logsumexp(logp[tau + 1 :])))


def fpr_traceability(q, tau, n_users):
    """``1 - (1 - FPR(tau))**N`` without cancellation."""
    if n_users < 1:
        raise ValueError("N must be >= 1")
    p = fpr_detection(q, tau)
    if p == 0.0:
        return 0.0
    return float(-math.expm1(n_users * math.log1p(-p)))


def fpr_traceability_approx(q, tau, n_users):
    return n_users * fpr_detection(q, tau)


def calibrate_tau(q, target_fpr, n_users=None):
    """Smallest tau whose (detection or traceability) FPR is <= target."""
    if not 0 < target_fpr < 1:
        raise ValueError("target_fpr must lie in (0, 1)")
    table = fpr_detection_table(q)
    if n_users is not None:
        if n_users < 1:
            raise ValueError("N must be >= 1")
        with np.errstate(divide="ignore"):
            table = -np.expm1(n_users * np.log1p(-table))
    ok = np.flatnonzero(table <= target_fpr)
    if ok.size == 0:
        raise ValueError(f"no threshold reaches FPR {target_fpr}")
    return int(ok[0])


class TraceResult(NamedTuple):
    matched_user: int | None
    best_acc: int
    passed: bool


def trace(db, extracted, tau, mode="operator"):
    """Match an extracted watermark against every user in ``db``.

    Passes iff the best match count exceeds ``tau``; ties go to the lowest id.
    """
    if len(db) == 0:
        raise ValueError("empty user database")
    extracted = np.asarray(extracted, dtype=np.uint8)
    q = extracted.size
    ids, packed = db.packed_watermarks(q, mode)
    diff = np.bitwise_count(packed ^ pack_bits64(extracted)).sum(axis=1)
    matches = q - diff.astype(np.int64)
    best = int(np.argmax(matches))  # ids are sorted, so the first max is the lowest id
    best_acc = int(matches[best])
    if best_acc > tau:
        return TraceResult(int(ids[best]), best_acc, True)
    return TraceResult(None, best_acc, False)


class NormalityReport(NamedTuple):
    ks_stat: float
    ks_p: float
    jb_stat: float
    jb_p: float
    mean: float
    variance: float


def audit_normality(samples):
    """One-sample K-S against N(0, 1) and the Jarque-Bera moment test."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    n = x.size
    if n < 100:
        raise ValueError(f"need at least 100 samples, got {n}")
    ks = sps.kstest(x, "norm", method="asymp")
    mean = float(x.mean())
    dev = x - mean
    m2 = float(np.mean(dev**2))
    if np.all(x == x[0]):
        jb, jb_p = math.inf, 0.0
    else:
        skew = float(np.mean(dev**3)) / m2**1.5
        kurt = float(np.mean(dev**4)) / m2**2
        jb = n / 6.0 * (skew**2 + 0.25 * (kurt - 3.0) ** 2)
        jb_p = float(sps.chi2.sf(jb, 2))
    return NormalityReport(float(ks.statistic), float(ks.pvalue), float(jb), jb_p,
                           mean, float(x.var(ddof=1)))


def audit_posterior(sigma_model, sigma_sim, n_samples, rng=None, n_bins=50):
    """Largest gap between the empirical E[symbol | z'] and the erf posterior.

    Symbols are uniform, latents come from the distribution-preserving
    sampler and ``z' = z + N(0, sigma_sim**2)``. Samples are grouped into
    ``n_bins`` equal-count bins of z'; in each bin the mean symbol is compared
    with the mean model posterior over the same samples.
    """
    from .sampler import dps_sample, posterior_estimate

    rng = as_rng(rng)
    symbols = np.where(rng.random(n_samples) < 0.5, -1, 1).astype(np.int8)
    z = dps_sample(symbols, 1, rng).astype(np.float64)
    z_prime = z + sigma_sim * rng.standard_normal(n_samples)
    predicted = posterior_estimate(z_prime, sigma_model)
    order = np.argsort(z_prime, kind="stable")
    gaps = [abs(symbols[idx].mean() - predicted[idx].mean())
            for idx in np.array_split(order, n_bins)]
    return float(max(gaps))


def binomial_interval(p, n, level=0.99):
    """Central interval of Binomial(n, p) / n: where an observed rate should fall."""
    lo, hi = sps.binom.interval(level, n, p)
    return lo / n, hi / n
