"""Latent-space noise channels and the Monte Carlo trial harness.

The channels stand in for generate -> distort -> invert:
awgn ~ inversion error / Gaussian noise, signflip ~ severe distortion,
resample ~ removal attack, scale ~ brightness change.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field

import numpy as np

from ._util import as_rng
from .gs import pack_payload, unpack_payload
from .keys import UserDatabase
from .pipeline import WatermarkConfig, embed, extract
from .stats import acc, calibrate_tau, trace

__all__ = [
    "ChannelSpec",
    "awgn",
    "signflip",
    "resample",
    "scale",
    "compose",
    "apply_channel",
    "TrialRecord",
    "run_trials",
    "sweep_report",
    "REPORT_COLUMNS",
]

log = logging.getLogger(__name__)

KINDS = ("awgn", "signflip", "resample", "scale", "compose")


@dataclass(frozen=True)
class ChannelSpec:
    kind: str
    value: float = 0.0
    children: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown channel kind {self.kind!r}")
        if self.kind == "awgn" and not self.value >= 0:
            raise ValueError("awgn sigma must be >= 0")
        if self.kind in ("signflip", "resample") and not 0 <= self.value <= 1:
            raise ValueError(f"{self.kind} probability must lie in [0, 1]")
        if self.kind == "scale" and not self.value > 0:
            raise ValueError("scale factor must be positive")
        if self.kind == "compose":
            if not self.children:
                raise ValueError("compose needs at least one child channel")
            object.__setattr__(self, "children", tuple(self.children))

    @property
    def label(self):
        if self.kind == "compose":
            return "+".join(c.label for c in self.children)
        name = {"awgn": "sigma", "scale": "factor"}.get(self.kind, "p")
        return f"{self.kind}({name}={self.value:g})"


def awgn(sigma):
    return ChannelSpec("awgn", float(sigma))


def signflip(p):
    return ChannelSpec("signflip", float(p))


def resample(p):
    return ChannelSpec("resample", float(p))


def scale(factor):
    return ChannelSpec("scale", float(factor))


def compose(*children):
    return ChannelSpec("compose", children=tuple(children))


def apply_channel(z, spec, rng=None):
    """Pass a latent through ``spec``; deterministic given ``rng``."""
    rng = as_rng(rng)
    z = np.asarray(z, dtype=np.float32)
    if spec.kind == "awgn":
        if spec.value == 0:
            return z.copy()
        return (z + spec.value * rng.standard_normal(z.shape)).astype(np.float32)
    if spec.kind == "signflip":
        return np.where(rng.random(z.shape) < spec.value, -z, z).astype(np.float32)
    if spec.kind == "resample":
        fresh = rng.standard_normal(z.shape)
        return np.where(rng.random(z.shape) < spec.value, fresh, z).astype(np.float32)
    if spec.kind == "scale":
        return (z * spec.value).astype(np.float32)
    for child in spec.children:
        z = apply_channel(z, child, rng)
    return z


@dataclass
class TrialRecord:
    channel: str
    trial: int
    seed_decoded: bool
    bit_accuracy: float
    detected_at_tau: bool
    signature_valid: bool | None = None
    trace_correct: bool | None = None
    accuracy_by_method: dict = field(default_factory=dict)
    user_id: int | None = None
    traced_user: int | None = None


def _trial_seed(rng_seed, index):
    return np.random.SeedSequence([int(rng_seed), int(index)])


def run_trials(ks, payload_source, spec, n_trials, rng_seed=0, cfg=WatermarkConfig(),
               tau=None, trace_tau=None, methods=None):
    """Embed, distort, extract ``n_trials`` times.

    ``payload_source`` is either a fixed payload bit array or a
    :class:`UserDatabase`, in which case every trial watermarks a user drawn
    from it and tracing is scored. Trial ``i`` is reproducible from
    ``(rng_seed, i)`` alone. ``tau`` defaults to the detection threshold at
    FPR 1e-6; ``trace_tau`` to the traceability threshold at 1e-6 for the
    database size.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    cfg.check(ks)
    q = cfg.q
    if tau is None:
        tau = calibrate_tau(q, 1e-6)
    db = payload_source if isinstance(payload_source, UserDatabase) else None
    if db is not None:
        if len(db) == 0:
            raise ValueError("empty user database")
        ids = db.user_ids()
        if trace_tau is None:
            trace_tau = calibrate_tau(q, 1e-6, len(db))
    else:
        fixed = np.asarray(payload_source, dtype=np.uint8)
        if fixed.size != q:
            raise ValueError(f"payload has {fixed.size} bits, capacity is {q}")
    vk = ks.verifying_key if cfg.mode == "thirdparty" else None

    records = []
    for i in range(n_trials):
        rng = as_rng(_trial_seed(rng_seed, i))
        user = None
        if db is not None:
            user = int(ids[rng.integers(len(ids))])
            payload = pack_payload(db.lookup(user), q, ks.signing_key, cfg.mode,
                                   signature=db.signature(user))
        else:
            payload = fixed
        emb = embed(ks, payload, cfg, rng)
        noisy = apply_channel(emb.latent, spec, rng)
        ex = extract(ks, noisy, cfg, methods)
        matches = acc(payload, ex.bits)
        sig_ok = None
        if cfg.mode == "thirdparty":
            sig_ok = bool(unpack_payload(ex.bits, vk, "thirdparty")[1])
        traced = None
        if db is not None:
            traced = trace(db, ex.bits, trace_tau, cfg.mode).matched_user
        records.append(TrialRecord(
            channel=spec.label,
            trial=i,
            seed_decoded=ex.header_ok and bool(np.array_equal(ex.seed, emb.seed)),
            bit_accuracy=matches / q,
            detected_at_tau=matches > tau,
            signature_valid=sig_ok,
            trace_correct=None if db is None else traced == user,
            accuracy_by_method={m: acc(payload, b) / q for m, b in ex.bits_by_method.items()},
            user_id=user,
            traced_user=traced,
        ))
    return records


REPORT_COLUMNS = ("channel", "n", "seed_decode_rate", "mean_bit_accuracy",
                  "std_bit_accuracy", "tpr", "trace_success_rate")


def _rate(values):
    vals = [v for v in values if v is not None]
    return f"{np.mean(vals):.6f}" if vals else ""


def sweep_report(groups):
    """CSV text, one row per channel setting.

    ``groups`` maps a label (or ChannelSpec) to its list of TrialRecords;
    empty groups are skipped with a warning.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_COLUMNS)
    for key, records in groups.items():
        label = key.label if isinstance(key, ChannelSpec) else str(key)
        if not records:
            log.warning("skipping empty group %s", label)
            continue
        accs = np.array([r.bit_accuracy for r in records])
        writer.writerow([
            label,
            len(records),
            _rate([r.seed_decoded for r in records]),
            f"{accs.mean():.6f}",
            f"{accs.std(ddof=0):.6f}",
            _rate([r.detected_at_tau for r in records]),
            _rate([r.trace_correct for r in records]),
        ])
    return buf.getvalue()
