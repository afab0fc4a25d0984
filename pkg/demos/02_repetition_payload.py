"""
The payload half: repetition, stream key and soft decoding
==========================================================

The remaining two channels carry a 256-bit payload, each bit replicated 32
times across the latent and XORed with a keystream derived from the seed.
Decoding sums per-bit evidence over the replicas.
"""

import numpy as np

from latentmark.gs import (
    GsParams,
    derive_stream_key,
    diffuse,
    gs_decode,
    gs_randomize,
    pack_payload,
    unpack_payload,
)
from latentmark.keys import keygen_signature
from latentmark.sampler import dps_sample, posterior_estimate

shape = (4, 64, 64)
params = GsParams(f_ch=2, f_hw=4)
print("capacity q =", params.capacity(shape), " replicas per bit =", params.num)

# operator mode: 32-bit user info tiled 8 times
bits = pack_payload(0xA5A5A5A5, 256)
print(bits[:40])

# third-party mode: user info followed by a 224-bit ECDSA signature
sk, vk = keygen_signature(7)
signed = pack_payload(0x00C0FFEE, 256, sk, "thirdparty")
print("unpack:", unpack_payload(signed, vk, "thirdparty"))

sd = diffuse(bits, params, shape)
print("diffused:", sd.shape, " ones:", sd.sum(), "=", bits.sum() * params.num)

rng = np.random.default_rng(0)
seed = rng.integers(0, 2, 32, dtype=np.uint8)
sk_c = rng.integers(0, 2, 256, dtype=np.uint8)
key = derive_stream_key(seed, sk_c, sd.size)
symbols = gs_randomize(sd, key)
print("symbol balance after the stream key:", (symbols > 0).mean())

# soft (first-order), exact LLR and hard majority decoding under noise
for sigma in (1.0, 1.6, 2.2, 3.0):
    errs = {"soft": 0, "exact": 0, "hard": 0}
    for _ in range(20):
        z = dps_sample(symbols, 1, rng)
        soft = posterior_estimate(z + sigma * rng.standard_normal(z.shape))
        for m in errs:
            errs[m] += np.count_nonzero(gs_decode(soft, key, params, shape, m)[0] != bits)
    print(f"sigma={sigma}", {m: round(e / (20 * 256), 4) for m, e in errs.items()})

# where first-order and exact decoding disagree: one confident replica vs two weak ones
one = GsParams(f_ch=3, f_hw=1)
vals = np.array([0.99, -0.5, -0.5]).reshape(3, 1, 1)
for m in ("soft", "exact"):
    print(m, gs_decode(vals, np.zeros(3, np.uint8), one, (6, 1, 1), m))
