import mpmath
import numpy as np
import pytest
from scipy import special, stats

from latentmark.sampler import (
    LatentFileError,
    dps_sample,
    erf_eval,
    load_latent,
    merge_channels,
    normal_cdf,
    posterior_estimate,
    quantile,
    save_latent,
    split_channels,
)

mpmath.mp.dps = 40


def mp_quantile(p):
    """Independent oracle: bisection on the high-precision normal CDF."""
    p = mpmath.mpf(p)
    lo, hi = mpmath.mpf(-40), mpmath.mpf(40)
    for _ in range(200):
        mid = (lo + hi) / 2
        if mpmath.ncdf(mid) < p:
            lo = mid
        else:
            hi = mid
    return float((lo + hi) / 2)


def test_quantile_examples():
    assert quantile(0.5) == 0.0
    assert quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)
    assert quantile(0.25) == pytest.approx(-0.6744897501960817, abs=1e-12)
    assert quantile(0.75) == pytest.approx(0.6744897501960817, abs=1e-12)


@pytest.mark.parametrize("p", [1e-300, 1e-100, 1e-12, 1e-5, 0.0242, 0.02425, 0.1, 0.3, 0.5001,
                               0.77, 0.97575, 0.99, 1 - 1e-9, 1 - 1e-16])
def test_quantile_vs_bisection_oracle(p):
    ref = mp_quantile(p)
    assert quantile(p) == pytest.approx(ref, rel=1e-12, abs=1e-12)


def test_quantile_cdf_inverse_pair():
    p = (np.arange(10_000) + 0.5) / 10_000
    assert np.max(np.abs(normal_cdf(quantile(p)) - p)) <= 1e-9


def test_quantile_domain():
    for bad in (0.0, 1.0, -0.1, np.nan):
        with pytest.raises(ValueError):
            quantile(bad)


def test_erf_examples():
    assert erf_eval(0.0) == 0.0
    assert posterior_estimate(0.0) == 0.0
    scale = float(mpmath.sqrt(2 * mpmath.mpf(1.5) * (1 + mpmath.mpf(1.5))))
    assert scale == pytest.approx(2.7386127875258306)
    assert posterior_estimate(2.73861) == pytest.approx(float(mpmath.erf(1)), abs=1e-5)
    assert posterior_estimate(1e3) == 1.0
    assert posterior_estimate(-1e3) == -1.0


def test_conditional_support_and_sign(rng):
    symbols = np.where(rng.random(200_000) < 0.5, -1, 1).astype(np.int8)
    z = dps_sample(symbols, 1, rng)
    assert np.all(np.sign(z) == symbols)
    assert np.all(np.sign(posterior_estimate(z)) == symbols)


def test_distribution_preservation(rng):
    symbols = np.where(rng.random(100_000) < 0.5, -1, 1)
    z = dps_sample(symbols, 1, rng).astype(np.float64)
    assert stats.kstest(z, "norm").pvalue > 0.01
    assert abs(z.mean()) < 0.01
    assert abs(z.var() - 1) < 0.02


def test_histogram_matches_density(rng):
    n = 100_000
    z = dps_sample(np.where(rng.random(n) < 0.5, -1, 1), 1, rng).astype(np.float64)
    edges = np.concatenate([[-np.inf], np.linspace(-4, 4, 33), [np.inf]])
    counts = np.histogram(z, edges)[0]
    probs = np.diff(special.ndtr(edges))
    expected = n * probs
    bound = 4 * np.sqrt(n * probs * (1 - probs))
    assert np.all(np.abs(counts - expected) <= bound + 1e-9)


def test_dps_rejects_bad_symbols():
    with pytest.raises(ValueError):
        dps_sample(np.array([1, 0, -1]))


def test_split_merge():
    t = np.arange(4 * 64 * 64).reshape(4, 64, 64)
    a, b = split_channels(t)
    assert a.shape == b.shape == (2, 64, 64)
    assert np.array_equal(merge_channels(a, b), t)
    with pytest.raises(ValueError):
        split_channels(np.zeros((3, 4, 4)))


def test_latent_file_roundtrip(tmp_path, rng):
    z = rng.standard_normal((4, 8, 8)).astype(np.float32)
    path = tmp_path / "z.bin"
    save_latent(z, path)
    data = path.read_bytes()
    assert data[:4] == b"LTNT" and data[4] == 1 and len(data) == 17 + 4 * z.size
    assert np.array_equal(load_latent(path), z)


@pytest.mark.parametrize("mutate", [
    lambda d: b"NOPE" + d[4:],
    lambda d: d[:10],
    lambda d: d[:-2],
    lambda d: d[:4] + b"\x07" + d[5:],
])
def test_latent_file_errors(tmp_path, mutate):
    path = tmp_path / "z.bin"
    save_latent(np.zeros((2, 2, 2), np.float32), path)
    path.write_bytes(mutate(path.read_bytes()))
    with pytest.raises(LatentFileError):
        load_latent(path)
