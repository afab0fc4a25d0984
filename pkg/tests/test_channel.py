import logging

import numpy as np
import pytest
from scipy import stats

from latentmark.channel import (
    ChannelSpec,
    apply_channel,
    awgn,
    compose,
    resample,
    run_trials,
    scale,
    signflip,
    sweep_report,
)
from latentmark.gs import pack_payload
from latentmark.keys import UserDatabase
from latentmark.pipeline import WatermarkConfig, embed, extract


@pytest.fixture(scope="module")
def payload():
    return pack_payload(0xA5A5A5A5, 256)


def test_elementary_channels(rng):
    z = rng.standard_normal((4, 64, 64)).astype(np.float32)
    assert np.array_equal(apply_channel(z, awgn(0), rng), z)
    assert np.array_equal(apply_channel(z, signflip(1), rng), -z)
    assert np.array_equal(apply_channel(z, scale(2), rng), 2 * z)
    fresh = apply_channel(z, resample(1), rng).ravel().astype(np.float64)
    assert stats.kstest(fresh, "norm").pvalue > 0.01
    assert abs(np.corrcoef(fresh, z.ravel())[0, 1]) < 0.02


def test_spec_validation():
    for bad in (lambda: awgn(-1), lambda: signflip(1.5), lambda: scale(0),
                lambda: compose(), lambda: ChannelSpec("jpeg", 1)):
        with pytest.raises(ValueError):
            bad()
    assert compose(scale(0.5), awgn(1)).label == "scale(factor=0.5)+awgn(sigma=1)"


def test_composed_noise_is_gaussian(rng):
    z = np.zeros(200_000, np.float32)
    out = apply_channel(z, compose(awgn(0.6), awgn(0.8)), rng).astype(np.float64)
    assert stats.kstest(out, "norm", args=(0, 1.0)).pvalue > 0.01


def test_noiseless_trials(default_ks, payload):
    recs = run_trials(default_ks, payload, awgn(0), 100, rng_seed=1)
    assert all(r.seed_decoded and r.bit_accuracy == 1.0 and r.detected_at_tau for r in recs)


def test_resample_is_chance(default_ks, payload):
    recs = run_trials(default_ks, payload, resample(1), 100, rng_seed=2)
    assert abs(np.mean([r.bit_accuracy for r in recs]) - 0.5) < 0.03
    assert not any(r.seed_decoded for r in recs)


def test_accuracy_falls_with_sigma(default_ks, payload):
    means = [np.mean([r.bit_accuracy for r in run_trials(default_ks, payload, awgn(s), 60, rng_seed=3)])
             for s in (0.5, 1.0, 1.5, 2.0)]
    assert all(a + 0.03 >= b for a, b in zip(means, means[1:])), means
    assert means[0] == 1.0 and means[-1] < 0.9


def test_composition_matches_single_awgn(default_ks, payload):
    s1, s2 = 1.2, 1.25
    a = run_trials(default_ks, payload, compose(awgn(s1), awgn(s2)), 1000, rng_seed=4)
    b = run_trials(default_ks, payload, awgn(np.hypot(s1, s2)), 1000, rng_seed=5)
    acc_a = np.mean([r.bit_accuracy for r in a])
    acc_b = np.mean([r.bit_accuracy for r in b])
    assert abs(acc_a - acc_b) < 0.02, (acc_a, acc_b)


def test_scale_leaves_bits_unchanged(default_ks, payload):
    emb = embed(default_ks, payload, WatermarkConfig(), 9)
    ref = extract(default_ks, emb.latent).bits
    for f in (0.5, 1.0, 2.0):
        ex = extract(default_ks, apply_channel(emb.latent, scale(f)))
        assert ex.header_ok and np.array_equal(ex.bits, ref)


def test_determinism(default_ks):
    db = UserDatabase()
    for uid in range(5):
        db.assign(uid, 1000 + uid)
    spec = compose(awgn(1.0), signflip(0.01))
    a = run_trials(default_ks, db, spec, 8, rng_seed=42, methods=("soft", "hard"))
    b = run_trials(default_ks, db, spec, 8, rng_seed=42, methods=("soft", "hard"))
    assert a == b


def test_report_csv(default_ks, payload, caplog):
    recs = run_trials(default_ks, payload, awgn(0.5), 10, rng_seed=6)
    text = sweep_report({awgn(0.5): recs})
    lines = text.splitlines()
    assert len(lines) == 2
    assert lines[0] == "channel,n,seed_decode_rate,mean_bit_accuracy,std_bit_accuracy,tpr,trace_success_rate"
    assert lines[1].startswith("awgn(sigma=0.5),10,1.000000,1.000000")
    again = run_trials(default_ks, payload, awgn(0.5), 10, rng_seed=6)
    assert sweep_report({awgn(0.5): again}) == text
    with caplog.at_level(logging.WARNING):
        assert sweep_report({"empty": []}).count("\n") == 1
    assert "empty" in caplog.text


def test_trial_argument_errors(default_ks, payload):
    with pytest.raises(ValueError):
        run_trials(default_ks, payload, awgn(0), 0)
    with pytest.raises(ValueError):
        run_trials(default_ks, payload[:100], awgn(0), 1)
    with pytest.raises(ValueError):
        run_trials(default_ks, UserDatabase(), awgn(0), 1)
