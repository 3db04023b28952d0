"""
YIN on a noisy vibrato
======================

The time-domain comparator run against ground truth at a few noise levels.
Truth is averaged onto YIN's own 25 ms frame grid before scoring.
"""

import numpy as np

from spectropitch.baseline import yin_f0
from spectropitch.frontend import contour_on_grid
from spectropitch.metrics import evaluate_contour
from spectropitch.synth import SynthSpec, Trajectory, gen_noise, mix_at_snr, synth_harmonic

spec = SynthSpec(4.0, Trajectory.vibrato(180.0, 25.0, 1.5), ((0.5, 3.5),), n_harmonics=12)
clip, contour = synth_harmonic(spec, seed=3)

for snr in (20.0, 12.0, 6.0, 0.0):
    noisy = mix_at_snr(clip, gen_noise("pink", len(clip), 16000, seed=4), snr)
    est = yin_f0(noisy)
    truth = contour_on_grid(contour, 0.0, est.hop_s, len(est))
    r = evaluate_contour("vibrato", est, truth, snr)
    print(f"{snr:5.1f} dB  rho {r.rho:+.3f} ({r.rho_band})  AR {r.ar:.3f}  "
          f"transition errors {r.transition_errors}")

###############################################################################
# A few frames side by side at 6 dB.
est = yin_f0(mix_at_snr(clip, gen_noise("pink", len(clip), 16000, seed=4), 6.0))
truth = contour_on_grid(contour, 0.0, est.hop_s, len(est))
for k in np.linspace(10, len(est) - 10, 8).astype(int):
    print(f"t={est.times_s[k]:.3f} s  truth {truth[k]:6.1f}  yin {est.f0_hz[k]:6.1f}")
