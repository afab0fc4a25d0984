"""
Robustness sweep over latent-space channels
===========================================

Noise channels stand in for generate -> distort -> invert. Each trial
embeds a fresh seed, distorts the latent and extracts both channels; the
report is a CSV with one row per channel setting.
"""

from latentmark import PrcParams, UserDatabase, keygen, sweep_report
from latentmark.channel import awgn, compose, resample, run_trials, scale, signflip

ks = keygen(PrcParams.for_shape((4, 64, 64)), rng_seed=0)

db = UserDatabase()
for uid in range(200):
    db.assign(uid, (2654435761 * (uid + 1)) % 2**32)

specs = [awgn(s) for s in (0.0, 0.8, 1.2, 1.6, 2.0)]
specs += [signflip(0.1), resample(0.3), compose(scale(0.5), awgn(1.0)), resample(1.0)]

groups = {spec: run_trials(ks, db, spec, 30, rng_seed=k, methods=("soft", "hard"))
          for k, spec in enumerate(specs)}
print(sweep_report(groups))

for spec, recs in groups.items():
    soft = sum(r.accuracy_by_method["soft"] for r in recs) / len(recs)
    hard = sum(r.accuracy_by_method["hard"] for r in recs) / len(recs)
    print(f"{spec.label:32s} soft {soft:.4f}  hard {hard:.4f}")
