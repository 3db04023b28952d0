"""Audio to spectrogram images and F0 targets.

A clip is cut into buffers of 64 STFT frames (1.024 s at 16 kHz, hop 256).
Each buffer is cropped to 0-2 kHz, grey-scale tuned to suppress background
noise, and reduced to 27 frequency bands. The matching target vector holds
44 normalized F0 values, one per equal sub-interval of the buffer.
"""

import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import get_window

from .errors import BadShape, TooShort

IMAGE_ROWS = 27
IMAGE_COLS = 64


@dataclass(frozen=True)
class FrontendConfig:
    sample_rate_hz: int = 16000
    window_s: float = 0.025
    hop_samples: int = 256
    fft_size: int = 512
    crop_hz: float = 2000.0
    tune_floor_percentile: float = 20.0
    tune_threshold: float = 0.15
    buffer_frames: int = 64
    target_frames: int = 44
    norm_max_hz: float = 500.0

    def __post_init__(self):
        if self.fft_size < self.window_samples:
            raise ValueError("fft_size must cover the analysis window")
        if self.crop_hz > self.sample_rate_hz / 2:
            raise ValueError("crop_hz above Nyquist")
        if not 0 <= self.tune_threshold < 1:
            raise ValueError("tune_threshold must lie in [0, 1)")

    @property
    def window_samples(self) -> int:
        return int(round(self.window_s * self.sample_rate_hz))

    @property
    def bin_hz(self) -> float:
        return self.sample_rate_hz / self.fft_size

    @property
    def n_crop_bins(self) -> int:
        return int(round(self.crop_hz / self.bin_hz))

    @property
    def frame_hop_s(self) -> float:
        return self.hop_samples / self.sample_rate_hz

    @property
    def buffer_s(self) -> float:
        return self.buffer_frames * self.frame_hop_s

    @property
    def target_hop_s(self) -> float:
        return self.buffer_s / self.target_frames


@dataclass
class SpectrogramImage:
    """27 x 64 grey-scale image; row 0 is the lowest frequency band."""

    pixels: np.ndarray
    start_time_s: float
    hop_s: float

    def __post_init__(self):
        if self.pixels.shape != (IMAGE_ROWS, IMAGE_COLS):
            raise BadShape(f"image must be {IMAGE_ROWS}x{IMAGE_COLS}, got {self.pixels.shape}")


def stft_magnitude(clip, cfg: FrontendConfig = FrontendConfig()) -> np.ndarray:
    """Magnitude STFT, shape (fft_size // 2 + 1, n_frames).

    Frames are periodic-Hann windowed, start at multiples of the hop and are
    zero-padded to ``fft_size``. No centring.
    """
    x = np.asarray(clip.samples, dtype=np.float64)
    n_win = cfg.window_samples
    if x.shape[0] < n_win:
        raise TooShort(f"clip has {x.shape[0]} samples, need at least {n_win}")
    frames = np.lib.stride_tricks.sliding_window_view(x, n_win)[:: cfg.hop_samples]
    window = get_window("hann", n_win, fftbins=True)
    return np.abs(np.fft.rfft(frames * window, n=cfg.fft_size, axis=1)).T


def crop_lowpass(grid, cfg: FrontendConfig = FrontendConfig()) -> np.ndarray:
    """Keep only the bins below ``crop_hz`` (64 bins at the defaults)."""
    return np.asarray(grid)[: cfg.n_crop_bins]


def greyscale_tune(grid, cfg: FrontendConfig = FrontendConfig()) -> np.ndarray:
    """Log-compress, subtract a percentile floor, normalize, and gate.

    Pixels left below ``tune_threshold`` after min-max normalization are
    zeroed, which removes the diffuse background between harmonic bars.
    """
    p = np.log1p(np.asarray(grid, dtype=np.float64))
    floor = np.percentile(p, cfg.tune_floor_percentile)
    p = np.maximum(p - floor, 0.0)
    lo, hi = p.min(), p.max()
    if hi <= lo:
        return np.zeros_like(p)
    p = (p - lo) / (hi - lo)
    p[p < cfg.tune_threshold] = 0.0
    return p


def _band_matrix(n_in: int, n_out: int) -> np.ndarray:
    # weights[k, r] = overlap of row r's unit interval with band k, over band width
    width = n_in / n_out
    edges = np.arange(n_out + 1) * width
    rows = np.arange(n_in)
    lo = np.maximum(edges[:-1, None], rows[None, :])
    hi = np.minimum(edges[1:, None], rows[None, :] + 1)
    return np.clip(hi - lo, 0.0, None) / width


_BANDS = _band_matrix(64, IMAGE_ROWS)


def resize_to_model(grid, start_time_s: float = 0.0, hop_s: float = 0.016) -> SpectrogramImage:
    """Area-average a 64 x 64 window down to 27 frequency bands."""
    grid = np.asarray(grid, dtype=np.float64)
    if grid.shape != (_BANDS.shape[1], IMAGE_COLS):
        raise BadShape(f"expected a 64x64 window, got {grid.shape}")
    pixels = np.clip(_BANDS @ grid, 0.0, 1.0)
    return SpectrogramImage(pixels, start_time_s, hop_s)


def n_windows(n_samples: int, cfg: FrontendConfig = FrontendConfig()) -> int:
    n_frames = (n_samples - cfg.window_samples) // cfg.hop_samples + 1
    return -(-n_frames // cfg.buffer_frames)


def make_image_windows(clip, cfg: FrontendConfig = FrontendConfig()):
    """Split ``clip`` into non-overlapping 64-frame buffers and render each.

    The last buffer is zero-padded in time when the clip does not fill it.
    """
    if clip.sample_rate_hz != cfg.sample_rate_hz:
        raise ValueError(f"expected {cfg.sample_rate_hz} Hz audio, got {clip.sample_rate_hz}")
    grid = crop_lowpass(stft_magnitude(clip, cfg), cfg)
    if grid.shape[0] != _BANDS.shape[1]:
        raise BadShape(f"cropped grid has {grid.shape[0]} bins, expected {_BANDS.shape[1]}")
    n_buf = cfg.buffer_frames
    count = -(-grid.shape[1] // n_buf)
    padded = np.zeros((grid.shape[0], count * n_buf))
    padded[:, : grid.shape[1]] = grid
    images = []
    for w in range(count):
        tuned = greyscale_tune(padded[:, w * n_buf:(w + 1) * n_buf], cfg)
        images.append(resize_to_model(tuned, w * cfg.buffer_s, cfg.frame_hop_s))
    return images


def contour_on_grid(contour, start_time_s: float, hop_s: float, n_frames: int) -> np.ndarray:
    """Average a fine contour onto frames ``[start + k*hop, start + (k+1)*hop)``.

    Each frame gets the mean of the voiced contour samples it contains, or 0
    if it contains none (including frames past the end of the contour).
    """
    f0 = np.asarray(contour.f0_hz, dtype=np.float64)
    t = np.arange(f0.shape[0]) * contour.hop_s
    slot = np.floor((t - start_time_s) / hop_s + 1e-9).astype(int)
    keep = (slot >= 0) & (slot < n_frames) & (f0 > 0)
    sums = np.bincount(slot[keep], weights=f0[keep], minlength=n_frames)
    counts = np.bincount(slot[keep], minlength=n_frames)
    out = np.zeros(n_frames)
    np.divide(sums, counts, out=out, where=counts > 0)
    return out


def make_target(contour, start_time_s: float, cfg: FrontendConfig = FrontendConfig()) -> np.ndarray:
    """Normalized F0 target (44 values) for the buffer starting at ``start_time_s``."""
    hz = contour_on_grid(contour, start_time_s, cfg.target_hop_s, cfg.target_frames)
    return np.clip(hz / cfg.norm_max_hz, 0.0, 1.0)


def write_pgm(image: SpectrogramImage, path) -> None:
    """Binary PGM (P5, maxval 255) with the highest frequency band on top."""
    data = np.round(np.clip(image.pixels[::-1], 0, 1) * 255).astype(np.uint8)
    h, w = data.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(data.tobytes())


def read_pgm(path) -> np.ndarray:
    """Read a P5 file written by :func:`write_pgm`; returns uint8 rows top-down."""
    raw = Path(path).read_bytes()
    m = re.match(rb"P5\s+(\d+)\s+(\d+)\s+(\d+)\s", raw)
    if m is None:
        raise ValueError(f"{path}: not a binary PGM")
    w, h, maxval = (int(g) for g in m.groups())
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}")
    return np.frombuffer(raw[m.end(): m.end() + w * h], dtype=np.uint8).reshape(h, w)


def pgm_filename(index: int, image: SpectrogramImage) -> str:
    return f"window_{index:04d}_t{image.start_time_s:.3f}s.pgm"
