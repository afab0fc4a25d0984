"""
Hiding a random seed in half of a latent
========================================

The first two channels of the latent carry a 32-bit seed encoded with a
sparse LDPC code. Without the key the codeword looks like coin flips; with
it, belief propagation plus ordered statistics decoding gets the seed back
even after heavy noise.
"""

import numpy as np

from latentmark import PrcParams, keygen, prc_decode, prc_encode
from latentmark.prc import codeword_bits, syndrome
from latentmark.sampler import dps_sample, posterior_estimate

# a key set sized for a 4x64x64 latent: n = 8192 code bits, 32-bit seed
ks = keygen(PrcParams.for_shape((4, 64, 64)), rng_seed=0)
print(ks.params)
print("parity checks per bit:", np.bincount(ks.parity.ravel(), minlength=ks.params.n).mean())

rng = np.random.default_rng(1)
seed = rng.integers(0, 2, 32, dtype=np.uint8)

# noiseless codewords satisfy every parity check
clean = (prc_encode(ks, seed, eta=0) < 0).astype(np.uint8)
print("syndrome weight (eta=0):", syndrome(ks, clean).sum())

# the encoder flips ~5% of the bits on purpose
noisy = (prc_encode(ks, seed, rng) < 0).astype(np.uint8)
print("encoder flips:", np.count_nonzero(noisy != codeword_bits(ks, seed)), "of", ks.params.n)
print("fraction of ones:", noisy.mean())

# push the symbols through the Gaussian sampler and an AWGN channel, then decode
for sigma in (0.5, 1.0, 1.5, 2.0, 2.5):
    ok = 0
    for _ in range(20):
        s = rng.integers(0, 2, 32, dtype=np.uint8)
        z = dps_sample(prc_encode(ks, s, rng), 1, rng)
        soft = posterior_estimate(z + sigma * rng.standard_normal(z.shape))
        dec = prc_decode(ks, soft)
        ok += dec is not None and np.array_equal(dec, s)
    print(f"sigma={sigma}: seed recovered {ok}/20")

# random soft values almost never pass the failure test
fails = sum(prc_decode(ks, rng.uniform(-1, 1, ks.params.n)) is None for _ in range(20))
print("uniform noise rejected:", fails, "/ 20")
