"""
Watermarked latents stay standard normal
========================================

Each element is drawn from N(0, 1) conditioned on the sign its symbol
requests. Because the stream key makes the symbols look uniform, a fixed
payload still yields i.i.d. standard normal latents. Turning the key off
leaks the payload structure, and the normality tests notice.
"""

import numpy as np

from latentmark import PrcParams, audit_embeddings, keygen, pack_payload
from latentmark.sampler import DEFAULT_SIGMA, dps_sample, posterior_estimate
from latentmark.stats import audit_normality, audit_posterior

ks = keygen(PrcParams.for_shape((4, 64, 64)), rng_seed=0)
payload = pack_payload(0, 256)  # all-zero info: the most structured payload

print(audit_embeddings(ks, payload, 20, rng_seed=1))
print(audit_embeddings(ks, payload, 20, rng_seed=1, zero_stream_key=True))

# elementwise: half-normal pieces glue back into N(0, 1)
rng = np.random.default_rng(2)
z = dps_sample(np.where(rng.random(200_000) < 0.5, -1, 1), 1, rng)
print(audit_normality(z))
print("sign agreement:", np.mean((z > 0) == (posterior_estimate(z) > 0)))

# the erf posterior is calibrated for the channel it assumes
print("posterior gap, matched sigma:", audit_posterior(DEFAULT_SIGMA, DEFAULT_SIGMA, 10**6, 3))
print("posterior gap, sigma_sim=0.3:", audit_posterior(DEFAULT_SIGMA, 0.3, 10**6, 3))
