import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectropitch.audio_io import AudioClip
from spectropitch.errors import InvalidSpec, ZeroPower
from spectropitch.synth import (
    DatasetConfig, SynthSpec, Trajectory, build_dataset, gen_noise, load_manifest,
    mix_at_snr, noise_scale_for_snr, read_contour_csv, synth_harmonic, write_contour_csv,
)


def _autocorr_f0(frame, sr, f_lo=50.0, f_hi=500.0):
    # brute-force oracle: direct lag products, best lag in the allowed range
    frame = frame - frame.mean()
    lags = np.arange(int(sr / f_hi), int(sr / f_lo) + 1)
    n = len(frame) - lags[-1]
    r = np.array([np.dot(frame[:n], frame[lag:lag + n]) for lag in lags])
    i = int(np.argmax(r))
    if 0 < i < len(r) - 1:
        a, b, c = r[i - 1], r[i], r[i + 1]
        shift = 0.5 * (a - c) / (a - 2 * b + c)
    else:
        shift = 0.0
    return sr / (lags[i] + shift)


def test_constant_contour():
    spec = SynthSpec(1.0, Trajectory.constant(200), ((0.0, 1.0),), n_harmonics=1)
    clip, contour = synth_harmonic(spec, 0)
    np.testing.assert_array_equal(contour.f0_hz, 200.0)
    assert np.max(np.abs(clip.samples)) == pytest.approx(0.8, abs=1e-6)


def test_autocorrelation_peak_at_period():
    spec = SynthSpec(1.0, Trajectory.constant(200), ((0.0, 1.0),), n_harmonics=1)
    clip, _ = synth_harmonic(spec, 0)
    x = clip.samples.astype(float)
    lags = np.arange(40, 121)
    r = [np.dot(x[:-lag], x[lag:]) for lag in lags]
    assert lags[int(np.argmax(r))] == 80


def test_unvoiced_everywhere():
    spec = SynthSpec(0.5, Trajectory.constant(120), ())
    clip, contour = synth_harmonic(spec, 3)
    assert not np.any(clip.samples)
    assert not np.any(contour.f0_hz)


def test_voiced_segments_zero_outside():
    spec = SynthSpec(1.0, Trajectory.glide(100, 200), ((0.2, 0.6),))
    clip, contour = synth_harmonic(spec, 1)
    sr = clip.sample_rate_hz
    assert not np.any(clip.samples[: int(0.2 * sr) - 1])
    assert not np.any(clip.samples[int(0.6 * sr) + 1:])
    t = contour.times_s
    assert np.all(contour.f0_hz[(t < 0.2) | (t >= 0.6)] == 0)
    voiced = contour.f0_hz[(t >= 0.2) & (t < 0.6)]
    assert np.all((voiced >= 50) & (voiced <= 500))


def test_invalid_specs():
    with pytest.raises(InvalidSpec):
        synth_harmonic(SynthSpec(1.0, Trajectory.constant(600), ((0, 1),)))
    with pytest.raises(InvalidSpec):
        synth_harmonic(SynthSpec(1.0, Trajectory.constant(200), ((0.5, 0.9), (0.2, 0.4))))
    with pytest.raises(InvalidSpec):
        synth_harmonic(SynthSpec(1.0, Trajectory.constant(400), ((0, 1),), sample_rate_hz=700))


def test_harmonics_above_nyquist_dropped():
    spec = SynthSpec(0.5, Trajectory.constant(450), ((0, 0.5),), n_harmonics=40, sample_rate_hz=8000)
    clip, _ = synth_harmonic(spec, 0)
    mag = np.abs(np.fft.rfft(clip.samples))
    f = np.fft.rfftfreq(len(clip), 1 / 8000)
    assert mag[np.argmin(np.abs(f - 450))] > 0.1 * mag.max()
    assert np.all(np.isfinite(clip.samples))


@pytest.mark.parametrize("traj", [Trajectory.constant(137.0), Trajectory.glide(90, 260),
                                  Trajectory.vibrato(220, 30, 2.0)])
def test_autocorrelation_recovers_contour(traj):
    spec = SynthSpec(1.0, traj, ((0.0, 1.0),), n_harmonics=8, rolloff_db_per_harmonic=2.0)
    clip, contour = synth_harmonic(spec, 5)
    sr = clip.sample_rate_hz
    x = clip.samples.astype(float)
    for centre in (0.2, 0.45, 0.7):
        c = int(centre * sr)
        est = _autocorr_f0(x[c - 400:c + 400], sr)
        truth = traj.evaluate(np.array([centre]), 1.0)[0]
        assert abs(est - truth) / truth < 0.02


def test_noise_determinism_and_mean():
    for kind in ("white", "pink", "road_surrogate"):
        a = gen_noise(kind, 4000, 16000, seed=9)
        b = gen_noise(kind, 4000, 16000, seed=9)
        assert a.samples.tobytes() == b.samples.tobytes()
    white = gen_noise("white", 16000, 16000, seed=1)
    assert abs(float(np.mean(white.samples))) < 0.02


def _fraction_below(clip, f_cut):
    p = np.abs(np.fft.rfft(clip.samples.astype(float))) ** 2
    f = np.fft.rfftfreq(len(clip), 1 / clip.sample_rate_hz)
    return p[f < f_cut].sum() / p.sum()


def test_road_surrogate_low_frequency():
    road = gen_noise("road_surrogate", 32000, 16000, seed=4)
    assert _fraction_below(road, 500.0) >= 0.8


def test_pink_slope():
    pink = gen_noise("pink", 2 ** 17, 16000, seed=2)
    p = np.abs(np.fft.rfft(pink.samples.astype(float))) ** 2
    f = np.fft.rfftfreq(2 ** 17, 1 / 16000)
    band = lambda lo: p[(f >= lo) & (f < 2 * lo)].mean()
    # -3 dB per octave in power density
    slope = 10 * np.log10(band(2000) / band(1000))
    assert slope == pytest.approx(-3.0, abs=0.5)


def test_mix_scale_unit_cases():
    x = np.sin(np.linspace(0, 200 * np.pi, 8000, endpoint=False) + 0.3)
    assert noise_scale_for_snr(x, x, 0.0) == pytest.approx(1.0)
    rng = np.random.default_rng(0)
    noise = rng.standard_normal(8000)
    noise *= np.sqrt(0.05 / np.mean(noise ** 2))
    assert np.mean(x ** 2) == pytest.approx(0.5)
    assert noise_scale_for_snr(x, noise, 10.0) == pytest.approx(1.0, rel=1e-9)


def test_mix_silent_signal():
    with pytest.raises(ZeroPower):
        mix_at_snr(AudioClip(np.zeros(100)), gen_noise("white", 100), 10)


@settings(max_examples=25, deadline=None)
@given(st.floats(-5, 30), st.integers(0, 1000), st.sampled_from(["white", "pink", "road_surrogate"]))
def test_mix_achieves_requested_snr(snr, seed, kind):
    spec = SynthSpec(0.5, Trajectory.constant(180), ((0.1, 0.4),))
    clean, _ = synth_harmonic(spec, seed)
    noise = gen_noise(kind, len(clean), seed=seed)
    support = clean.samples != 0
    gain = noise_scale_for_snr(clean.samples, noise.samples, snr)
    s = clean.samples[support].astype(float)
    n = gain * noise.samples[support].astype(float)
    measured = 10 * np.log10(np.mean(s ** 2) / np.mean(n ** 2))
    assert measured == pytest.approx(snr, abs=0.1)
    mixed = mix_at_snr(clean, noise, snr)
    assert np.all(np.abs(mixed.samples) <= 1.0)


def test_contour_csv_round_trip(tmp_path):
    spec = SynthSpec(0.3, Trajectory.glide(100, 300), ((0.05, 0.25),))
    _, contour = synth_harmonic(spec, 0)
    write_contour_csv(contour, tmp_path / "c.csv")
    assert (tmp_path / "c.csv").read_text().splitlines()[0] == "frame_index,time_s,f0_hz"
    back = read_contour_csv(tmp_path / "c.csv")
    assert back.hop_s == contour.hop_s
    np.testing.assert_array_equal(back.f0_hz, contour.f0_hz)


SMALL = dict(counts={"train": 10, "val": 4, "test": 2}, duration_s=1.2, snr_db=[6, 20], seed=11)


def test_build_dataset_counts_and_determinism(tmp_path):
    m1 = build_dataset(DatasetConfig(**SMALL), tmp_path / "a")
    m2 = build_dataset(DatasetConfig(**SMALL), tmp_path / "b")
    assert len(m1["entries"]) == 16
    assert [e["split"] for e in m1["entries"]].count("val") == 4
    assert {e["snr_db"] for e in m1["entries"]} <= {6.0, 20.0}
    seeds = [e["seed"] for e in m1["entries"]]
    assert len(set(seeds)) == len(seeds)
    assert (tmp_path / "a/manifest.json").read_bytes() == (tmp_path / "b/manifest.json").read_bytes()
    for e in m1["entries"]:
        for key in ("clip", "contour"):
            assert (tmp_path / "a" / e[key]).read_bytes() == (tmp_path / "b" / e[key]).read_bytes()
    loaded = load_manifest(tmp_path / "a/manifest.json")
    assert loaded["entries"][0]["clip_path"].endswith(".wav")
    json.loads((tmp_path / "a/manifest.json").read_text())


def test_sampler_voiced_fraction(tmp_path):
    m = build_dataset(DatasetConfig(**{**SMALL, "counts": {"train": 6}}), tmp_path)
    for e in m["entries"]:
        total = sum(b - a for a, b in e["voiced_segments"])
        assert total == pytest.approx(0.7 * 1.2, abs=1e-4)
