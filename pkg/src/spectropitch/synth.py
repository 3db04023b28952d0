"""Harmonic test signals with known F0 contours, noise, and dataset building.

Every generator is a pure function of its arguments and an integer seed, so a
dataset is reproducible bit-for-bit from its configuration.
"""

import csv
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from .audio_io import DEFAULT_SAMPLE_RATE, AudioClip, write_wav
from .errors import InvalidSpec, ZeroPower

F0_MIN_HZ = 50.0
F0_MAX_HZ = 500.0
PEAK_LEVEL = 0.8
ROAD_CUTOFF_HZ = 300.0
NOISE_KINDS = ("white", "pink", "road_surrogate")
SPLITS = ("train", "val", "test")


@dataclass
class F0Contour:
    """Per-frame F0 in Hz; 0.0 marks an unvoiced frame."""

    hop_s: float
    f0_hz: np.ndarray

    def __post_init__(self):
        if self.hop_s <= 0:
            raise ValueError("hop_s must be positive")
        self.f0_hz = np.asarray(self.f0_hz, dtype=np.float64)

    def __len__(self):
        return self.f0_hz.shape[0]

    @property
    def times_s(self):
        return np.round(np.arange(len(self)) * self.hop_s, 9)

    @property
    def voiced(self):
        return self.f0_hz > 0


@dataclass(frozen=True)
class Trajectory:
    """F0 path over the clip.

    ``kind`` is ``"constant"`` (uses ``f_start``), ``"glide"`` (linear from
    ``f_start`` to ``f_end`` over the whole clip) or ``"vibrato"`` (centre
    ``f_start``, sinusoidal deviation ``depth_hz`` at ``rate_hz``).
    """

    kind: str
    f_start: float
    f_end: float = 0.0
    depth_hz: float = 0.0
    rate_hz: float = 0.0

    @classmethod
    def constant(cls, f):
        return cls("constant", float(f))

    @classmethod
    def glide(cls, f_start, f_end):
        return cls("glide", float(f_start), float(f_end))

    @classmethod
    def vibrato(cls, f_center, depth_hz, rate_hz):
        return cls("vibrato", float(f_center), depth_hz=float(depth_hz), rate_hz=float(rate_hz))

    def frequency_range(self):
        if self.kind == "constant":
            return self.f_start, self.f_start
        if self.kind == "glide":
            return min(self.f_start, self.f_end), max(self.f_start, self.f_end)
        if self.kind == "vibrato":
            return self.f_start - self.depth_hz, self.f_start + self.depth_hz
        raise InvalidSpec(f"unknown trajectory kind {self.kind!r}")

    def evaluate(self, t, duration_s):
        t = np.asarray(t, dtype=np.float64)
        if self.kind == "constant":
            return np.full_like(t, self.f_start)
        if self.kind == "glide":
            return self.f_start + (self.f_end - self.f_start) * t / duration_s
        return self.f_start + self.depth_hz * np.sin(2 * np.pi * self.rate_hz * t)


@dataclass(frozen=True)
class SynthSpec:
    duration_s: float
    trajectory: Trajectory
    voiced_segments: tuple = ()
    n_harmonics: int = 10
    rolloff_db_per_harmonic: float = 3.0
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE
    contour_hop_s: float = 0.001

    def validate(self):
        if self.duration_s <= 0 or self.sample_rate_hz <= 0 or self.contour_hop_s <= 0:
            raise InvalidSpec("duration, sample rate and contour hop must be positive")
        if self.n_harmonics < 1:
            raise InvalidSpec("n_harmonics must be >= 1")
        if self.rolloff_db_per_harmonic < 0:
            raise InvalidSpec("rolloff must be non-negative")
        lo, hi = self.trajectory.frequency_range()
        if hi >= self.sample_rate_hz / 2:
            raise InvalidSpec(f"fundamental {hi} Hz is above Nyquist")
        if lo < F0_MIN_HZ - 1e-9 or hi > F0_MAX_HZ + 1e-9:
            raise InvalidSpec(f"trajectory spans [{lo}, {hi}] Hz, outside [50, 500]")
        prev_end = 0.0
        for start, end in self.voiced_segments:
            if not (prev_end <= start < end <= self.duration_s + 1e-9):
                raise InvalidSpec(f"voiced segments must be sorted, disjoint and in range: {self.voiced_segments}")
            prev_end = end


def _voiced_mask(t, segments):
    mask = np.zeros(t.shape, dtype=bool)
    for start, end in segments:
        mask |= (t >= start) & (t < end)
    return mask


def synth_harmonic(spec: SynthSpec, seed: int = 0):
    """Render a harmonic tone and its ground-truth contour.

    Harmonic ``k`` has phase ``k * 2*pi*cumsum(f0)/sr`` so all partials stay
    locked to the fundamental along glides. Partials at or above Nyquist for
    the trajectory's highest F0 are dropped. The seed only sets the random
    starting phase of the fundamental.

    Returns
    -------
    clip : AudioClip
    contour : F0Contour
    """
    spec.validate()
    sr = spec.sample_rate_hz
    n = int(round(spec.duration_s * sr))
    t = np.arange(n) / sr
    f0 = spec.trajectory.evaluate(t, spec.duration_s)
    phase0 = np.random.default_rng(seed).uniform(0, 2 * np.pi)
    phase = phase0 + 2 * np.pi * np.cumsum(f0) / sr

    _, f_max = spec.trajectory.frequency_range()
    samples = np.zeros(n)
    for k in range(1, spec.n_harmonics + 1):
        if k * f_max >= sr / 2:
            break
        amp = 10.0 ** (-spec.rolloff_db_per_harmonic * (k - 1) / 20.0)
        samples += amp * np.sin(k * phase)
    samples[~_voiced_mask(t, spec.voiced_segments)] = 0.0
    peak = np.max(np.abs(samples)) if n else 0.0
    if peak > 0:
        samples *= PEAK_LEVEL / peak

    n_contour = int(np.floor(spec.duration_s / spec.contour_hop_s + 1e-9))
    tc = np.arange(n_contour) * spec.contour_hop_s
    fc = spec.trajectory.evaluate(tc, spec.duration_s)
    fc[~_voiced_mask(tc, spec.voiced_segments)] = 0.0
    return AudioClip(samples, sr), F0Contour(spec.contour_hop_s, fc)


def gen_noise(kind: str, n_samples: int, sample_rate_hz: int = DEFAULT_SAMPLE_RATE, seed: int = 0) -> AudioClip:
    """Deterministic noise of the given colour.

    ``road_surrogate`` is white noise passed twice through a one-pole
    low-pass at 300 Hz, concentrating energy well below typical voice
    harmonics. All kinds are scaled to an RMS of 0.1.
    """
    if n_samples <= 0:
        raise ValueError("n_samples must be positive")
    rng = np.random.default_rng(seed)
    white = rng.standard_normal(n_samples)
    if kind == "white":
        x = white
    elif kind == "pink":
        spectrum = np.fft.rfft(white)
        f = np.fft.rfftfreq(n_samples, 1.0 / sample_rate_hz)
        shaping = np.ones_like(f)
        shaping[1:] = 1.0 / np.sqrt(f[1:] / f[1])
        shaping[0] = 0.0
        x = np.fft.irfft(spectrum * shaping, n=n_samples)
    elif kind == "road_surrogate":
        a = np.exp(-2 * np.pi * ROAD_CUTOFF_HZ / sample_rate_hz)
        x = lfilter([1 - a], [1, -a], white)
        x = lfilter([1 - a], [1, -a], x)
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    rms = np.sqrt(np.mean(x ** 2))
    if rms > 0:
        x = x * (0.1 / rms)
    return AudioClip(x, sample_rate_hz)


def noise_scale_for_snr(signal, noise, snr_db, support=None):
    """Gain applied to ``noise`` so the mix has ``snr_db`` over ``support``.

    ``support`` defaults to the non-zero samples of ``signal``.
    """
    signal = np.asarray(signal, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)[: signal.shape[0]]
    if support is None:
        support = signal != 0
    if not np.any(support):
        raise ZeroPower("signal has no support")
    p_sig = np.mean(signal[support] ** 2)
    p_noise = np.mean(noise[support] ** 2)
    if p_sig <= 0:
        raise ZeroPower("signal power is zero")
    if p_noise <= 0:
        raise ZeroPower("noise power is zero over the signal support")
    return float(np.sqrt(p_sig / (p_noise * 10.0 ** (snr_db / 10.0))))


def mix_at_snr(signal: AudioClip, noise: AudioClip, snr_db: float, support=None) -> AudioClip:
    """Add scaled noise to ``signal`` at the requested SNR, then clip to [-1, 1]."""
    if signal.sample_rate_hz != noise.sample_rate_hz:
        raise ValueError("sample rates differ")
    if len(noise) < len(signal):
        raise ValueError("noise is shorter than the signal")
    gain = noise_scale_for_snr(signal.samples, noise.samples, snr_db, support)
    mixed = signal.samples.astype(np.float64) + gain * noise.samples[: len(signal)].astype(np.float64)
    return AudioClip(mixed, signal.sample_rate_hz)


# -- contour CSV ----------------------------------------------------------

def write_contour_csv(contour: F0Contour, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["frame_index", "time_s", "f0_hz"])
        for i, (t, f) in enumerate(zip(contour.times_s, contour.f0_hz)):
            w.writerow([i, repr(float(t)), repr(float(f))])


def read_contour_csv(path) -> F0Contour:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise ValueError(f"{path}: empty contour")
    times = np.array([float(r["time_s"]) for r in rows])
    f0 = np.array([float(r["f0_hz"]) for r in rows])
    hop = float(times[1] - times[0]) if len(times) > 1 else 1.0
    return F0Contour(round(hop, 9), f0)


# -- dataset building -----------------------------------------------------

@dataclass
class DatasetConfig:
    """Sampler settings for a synthetic corpus.

    ``trajectory_weights`` gives relative odds of glide, vibrato and constant
    trajectories. Each clip's voiced support covers ``voiced_fraction`` of
    its duration, split into one or two segments.
    """

    counts: dict = field(default_factory=lambda: {"train": 600, "val": 150, "test": 100})
    snr_db: list = field(default_factory=lambda: [20.0])
    noise_kinds: list = field(default_factory=lambda: list(NOISE_KINDS))
    duration_s: float = 24.576
    f0_range: list = field(default_factory=lambda: [70.0, 400.0])
    min_glide_ratio: float = 1.3
    vibrato_depth_frac: list = field(default_factory=lambda: [0.08, 0.2])
    vibrato_rate_hz: list = field(default_factory=lambda: [0.5, 2.0])
    trajectory_weights: dict = field(default_factory=lambda: {"glide": 0.7, "vibrato": 0.3, "constant": 0.0})
    n_harmonics: list = field(default_factory=lambda: [10, 30])
    rolloff_db: list = field(default_factory=lambda: [0.5, 3.0])
    voiced_fraction: float = 0.7
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE
    seed: int = 0


def entry_seed(master_seed: int, index: int) -> int:
    return (master_seed * 1_000_003 + index) % (2 ** 31)


def sample_spec(cfg: DatasetConfig, rng: np.random.Generator) -> SynthSpec:
    """Draw one random SynthSpec from the sampler ranges in ``cfg``."""
    lo, hi = cfg.f0_range
    kinds = sorted(cfg.trajectory_weights)
    w = np.array([cfg.trajectory_weights[k] for k in kinds], dtype=float)
    kind = kinds[rng.choice(len(kinds), p=w / w.sum())]
    if kind == "glide":
        log_lo, log_hi = np.log(lo), np.log(hi)
        min_span = np.log(cfg.min_glide_ratio)
        a = rng.uniform(log_lo, log_hi - min_span)
        b = rng.uniform(a + min_span, log_hi)
        fa, fb = np.exp(a), np.exp(b)
        traj = Trajectory.glide(fa, fb) if rng.random() < 0.5 else Trajectory.glide(fb, fa)
    elif kind == "vibrato":
        frac = rng.uniform(*cfg.vibrato_depth_frac)
        centre = rng.uniform(lo / (1 - frac), hi / (1 + frac))
        traj = Trajectory.vibrato(centre, frac * centre, rng.uniform(*cfg.vibrato_rate_hz))
    else:
        traj = Trajectory.constant(rng.uniform(lo, hi))

    dur = cfg.duration_s
    n_seg = int(rng.integers(1, 3))
    voiced = cfg.voiced_fraction * dur
    seg_lens = voiced * rng.dirichlet(np.ones(n_seg))
    gaps = (dur - voiced) * rng.dirichlet(np.ones(n_seg + 1))
    segments, t = [], 0.0
    for g, s in zip(gaps[:-1], seg_lens):
        start = t + g
        segments.append((round(float(start), 6), round(float(start + s), 6)))
        t = start + s

    return SynthSpec(
        duration_s=dur,
        trajectory=traj,
        voiced_segments=tuple(segments),
        n_harmonics=int(rng.integers(cfg.n_harmonics[0], cfg.n_harmonics[1] + 1)),
        rolloff_db_per_harmonic=float(rng.uniform(*cfg.rolloff_db)),
        sample_rate_hz=cfg.sample_rate_hz,
    )


def make_entry(cfg: DatasetConfig, index: int, snr_db: float):
    """Generate the (clip, contour, record) triple for dataset entry ``index``."""
    seed = entry_seed(cfg.seed, index)
    rng = np.random.default_rng(seed)
    spec = sample_spec(cfg, rng)
    kind = cfg.noise_kinds[int(rng.integers(len(cfg.noise_kinds)))]
    clean, contour = synth_harmonic(spec, seed)
    noise = gen_noise(kind, len(clean), spec.sample_rate_hz, seed + 1)
    mixed = mix_at_snr(clean, noise, snr_db)
    record = {
        "snr_db": float(snr_db),
        "noise_kind": kind,
        "seed": seed,
        "trajectory": asdict(spec.trajectory),
        "voiced_segments": [list(s) for s in spec.voiced_segments],
        "n_harmonics": spec.n_harmonics,
    }
    return mixed, contour, record


def build_dataset(cfg: DatasetConfig, out_dir) -> dict:
    """Write WAV clips, contour CSVs and ``manifest.json`` under ``out_dir``.

    SNR values are assigned round-robin so every SNR bin is equally
    populated. Paths in the manifest are relative to ``out_dir``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not os.access(out_dir, os.W_OK):
        raise PermissionError(f"output directory {out_dir} is not writable")

    entries = []
    index = 0
    for split in SPLITS:
        count = int(cfg.counts.get(split, 0))
        if count:
            (out_dir / split).mkdir(exist_ok=True)
        for i in range(count):
            snr = cfg.snr_db[index % len(cfg.snr_db)]
            clip, contour, record = make_entry(cfg, index, snr)
            entry_id = f"{split}_{i:05d}"
            clip_rel = f"{split}/{entry_id}.wav"
            contour_rel = f"{split}/{entry_id}.csv"
            write_wav(clip, out_dir / clip_rel)
            write_contour_csv(contour, out_dir / contour_rel)
            entries.append({"entry_id": entry_id, "split": split, "clip": clip_rel,
                            "contour": contour_rel, **record})
            index += 1

    manifest = {"config": asdict(cfg), "entries": entries}
    with open(out_dir / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return manifest


def load_manifest(path):
    """Load a manifest and resolve entry paths against its directory."""
    path = Path(path)
    with open(path) as fh:
        manifest = json.load(fh)
    root = path.parent
    for e in manifest["entries"]:
        e["clip_path"] = str(root / e["clip"])
        e["contour_path"] = str(root / e["contour"])
    return manifest
