"""
Thresholds, detection and tracing
=================================

Under the null hypothesis each extracted bit matches a given watermark with
probability 1/2, so the match count is Binomial(q, 1/2). Thresholds are
read off its tail; tracing against N users needs the union-corrected tail.
"""

import numpy as np

from latentmark import PrcParams, UserDatabase, WatermarkConfig, embed, extract, keygen
from latentmark.channel import apply_channel, awgn
from latentmark.gs import pack_payload
from latentmark.stats import calibrate_tau, fpr_detection, fpr_traceability, trace

for target in (1e-2, 1e-6, 1e-12):
    tau = calibrate_tau(256, target)
    print(f"detection  FPR<={target:g}: tau={tau}  exact FPR={fpr_detection(256, tau):.3g}")
for n in (1, 10**3, 10**5, 10**7):
    tau = calibrate_tau(256, 1e-6, n)
    print(f"tracing N={n:>8}: tau={tau}  FPR={fpr_traceability(256, tau, n):.3g}")

# the threshold is discrete: the nearest achievable rates bracket 1e-2
print("FPR(146) =", fpr_detection(256, 146), " FPR(147) =", fpr_detection(256, 147))

ks = keygen(PrcParams.for_shape((4, 64, 64)), rng_seed=0)
rng = np.random.default_rng(0)
db = UserDatabase()
for uid, info in enumerate(rng.choice(2**32, 10_000, replace=False)):
    db.assign(uid, int(info))
tau = calibrate_tau(256, 1e-6, len(db))

cfg = WatermarkConfig()
for uid in (3, 4242, 9999):
    emb = embed(ks, pack_payload(db.lookup(uid), 256), cfg, rng)
    ex = extract(ks, apply_channel(emb.latent, awgn(0.8), rng), cfg)
    print(f"user {uid}: header {'ok' if ex.header_ok else 'failed'}, traced ->", trace(db, ex.bits, tau))

# an unwatermarked latent
ex = extract(ks, rng.standard_normal((4, 64, 64)), cfg)
print("pure noise: header", ex.header_ok, "trace", trace(db, ex.bits, tau))
