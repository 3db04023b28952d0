"""YIN fundamental frequency estimator used as the time-domain comparator."""

from dataclasses import dataclass

import numpy as np

from .errors import TooShort
from .synth import F0Contour

RMS_FLOOR = 1e-4
VOICING_MAX_CMNDF = 0.5


@dataclass(frozen=True)
class YinConfig:
    frame_s: float = 0.025
    f_min: float = 50.0
    f_max: float = 500.0
    cmndf_threshold: float = 0.1
    sample_rate_hz: int = 16000

    def __post_init__(self):
        if not self.f_min < self.f_max < self.sample_rate_hz / 2:
            raise ValueError("need f_min < f_max < Nyquist")

    @property
    def hop_samples(self) -> int:
        return int(round(self.frame_s * self.sample_rate_hz))

    @property
    def window_samples(self) -> int:
        return int(round(2 * self.sample_rate_hz / self.f_min))

    @property
    def tau_min(self) -> int:
        return int(np.floor(self.sample_rate_hz / self.f_max))

    @property
    def tau_max(self) -> int:
        return int(np.ceil(self.sample_rate_hz / self.f_min))


def difference_function(frames, tau_max):
    """d(tau) = sum_j (x_j - x_{j+tau})^2 over the first ``W - tau_max`` samples.

    ``frames`` has shape (n, W) with W >= 2 * tau_max; returns (n, tau_max + 1).
    """
    frames = np.asarray(frames, dtype=np.float64)
    n, w = frames.shape
    span = w - tau_max
    head = frames[:, :span]
    size = 1 << int(np.ceil(np.log2(w + span)))
    cross = np.fft.irfft(np.fft.rfft(frames, size) * np.conj(np.fft.rfft(head, size)), size)[:, : tau_max + 1]
    energy = np.cumsum(frames ** 2, axis=1)
    energy = np.concatenate([np.zeros((n, 1)), energy], axis=1)
    taus = np.arange(tau_max + 1)
    head_energy = energy[:, span][:, None]
    shifted_energy = energy[:, taus + span] - energy[:, taus]
    return np.maximum(head_energy + shifted_energy - 2 * cross, 0.0)


def cmndf(d):
    """Cumulative-mean-normalized difference; d'(0) = 1."""
    d = np.asarray(d, dtype=np.float64)
    out = np.ones_like(d)
    taus = np.arange(1, d.shape[-1])
    running = np.cumsum(d[..., 1:], axis=-1)
    np.divide(d[..., 1:] * taus, running, out=out[..., 1:], where=running > 0)
    return out


def _pick(dp, tau_min, tau_max, threshold):
    # first dip below threshold, followed down to its local minimum
    seg = dp[tau_min: tau_max + 1]
    below = np.flatnonzero(seg < threshold)
    if below.size:
        i = below[0]
        while i + 1 < seg.size and seg[i + 1] < seg[i]:
            i += 1
    else:
        i = int(np.argmin(seg))
    tau = tau_min + i
    shift = 0.0
    if tau_min < tau < tau_max:
        a, b, c = dp[tau - 1], dp[tau], dp[tau + 1]
        denom = a - 2 * b + c
        if denom > 0:
            shift = 0.5 * (a - c) / denom
    return tau, tau + shift


def yin_f0(clip, cfg: YinConfig = YinConfig()) -> F0Contour:
    """Frame-wise YIN F0 contour.

    Frame ``k`` analyses a window centred on the middle of the interval
    ``[k*hop, (k+1)*hop)``, shifted inwards where it would overrun the
    clip. A frame is unvoiced (0.0) when the CMNDF at the picked lag
    exceeds 0.5 or the window RMS is below 1e-4.
    """
    if clip.sample_rate_hz != cfg.sample_rate_hz:
        raise ValueError(f"expected {cfg.sample_rate_hz} Hz audio, got {clip.sample_rate_hz}")
    x = np.asarray(clip.samples, dtype=np.float64)
    w, hop = cfg.window_samples, cfg.hop_samples
    if x.shape[0] < w:
        raise TooShort(f"clip has {x.shape[0]} samples, need at least {w}")
    n_frames = -(-x.shape[0] // hop)
    centres = np.arange(n_frames) * hop + hop // 2
    starts = np.clip(centres - w // 2, 0, x.shape[0] - w)
    frames = np.lib.stride_tricks.sliding_window_view(x, w)[starts]

    rms = np.sqrt(np.mean(frames ** 2, axis=1))
    dp = cmndf(difference_function(frames, cfg.tau_max))
    f0 = np.zeros(n_frames)
    for k in range(n_frames):
        if rms[k] < RMS_FLOOR:
            continue
        tau, tau_star = _pick(dp[k], cfg.tau_min, cfg.tau_max, cfg.cmndf_threshold)
        if dp[k, tau] > VOICING_MAX_CMNDF:
            continue
        f0[k] = cfg.sample_rate_hz / tau_star
    return F0Contour(hop / cfg.sample_rate_hz, f0)
