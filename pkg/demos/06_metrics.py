"""Separation metrics: scale-invariant SNR and projection SDR.

Demonstrates the invariances the training objective and reports rely on:
SiSNR ignores estimate scaling; SDR ignores delays shorter than its
projection filter. Run:

    python3 demos/06_metrics.py
"""

import numpy as np

from sdnet.objectives import improvement, sdr, sequence_ce, sisnr

rng = np.random.default_rng(0)
ref = rng.standard_normal(4000)
noise = rng.standard_normal(4000)
est = ref + 0.3 * noise

print("SiSNR(est, ref)           = %6.2f dB" % float(sisnr(est, ref)))
for alpha in (0.1, 3.0, 100.0):
    print("SiSNR(%5.1f * est, ref)   = %6.2f dB" % (alpha, float(sisnr(alpha * est, ref))))

print()
delayed = np.zeros_like(ref)
delayed[7:] = ref[:-7]
print("SDR(ref, ref)             = %6.2f dB (clamped)" % sdr(ref, ref))
print("SDR(delay-7 ref, ref)     = %6.2f dB (within 512-tap filter)" % sdr(delayed, ref))
print("SDR(est, ref)             = %6.2f dB" % sdr(est, ref))

print()
mix = ref + rng.standard_normal(4000)
print("SISNRi of est over mix    = %6.2f dB" % improvement(lambda a, b: float(sisnr(a, b)), est, ref, mix))

print()
dists = [[0.5, 0.25, 0.25], [0.25, 0.5, 0.25]]
print("sequence CE of toy steps  = %.4f nats (ln2 and ln4 averaged: %.4f)"
      % (float(sequence_ce(dists, [0, 2])), (np.log(2) + np.log(4)) / 2))
