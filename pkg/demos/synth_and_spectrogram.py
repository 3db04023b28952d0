"""
From a synthetic glide to network-ready images
==============================================

A harmonic glide is generated with a known F0 contour, buried in road-like
noise, and turned into the 27 x 64 grey-scale images the network reads.
The images are written as PGM files so they can be opened in any viewer.
"""

import sys
from pathlib import Path

import numpy as np

from spectropitch.frontend import make_image_windows, make_target, pgm_filename, write_pgm
from spectropitch.synth import SynthSpec, Trajectory, gen_noise, mix_at_snr, synth_harmonic

out = Path(sys.argv[1] if len(sys.argv) > 1 else "demo_images")
out.mkdir(exist_ok=True)

# 3 s glide from 120 Hz to 260 Hz, voiced between 0.4 s and 2.6 s
spec = SynthSpec(3.0, Trajectory.glide(120.0, 260.0), ((0.4, 2.6),), n_harmonics=15)
clip, contour = synth_harmonic(spec, seed=7)
noisy = mix_at_snr(clip, gen_noise("road_surrogate", len(clip), 16000, seed=8), snr_db=12.0)

###############################################################################
# One image per 1.024 s buffer; the last buffer is zero-padded.
images = make_image_windows(noisy)
print(f"{len(noisy) / 16000:.2f} s of audio -> {len(images)} images of shape {images[0].pixels.shape}")

for i, im in enumerate(images):
    target = make_target(contour, im.start_time_s) * 500.0
    voiced = target[target > 0]
    span = f"{voiced.min():.0f}-{voiced.max():.0f} Hz" if voiced.size else "unvoiced"
    lit = np.mean(im.pixels > 0)
    print(f"  buffer {i} at {im.start_time_s:.3f} s: target {span}, {lit:.0%} of pixels above the floor")
    write_pgm(im, out / pgm_filename(i, im))

print(f"images written to {out}/")
