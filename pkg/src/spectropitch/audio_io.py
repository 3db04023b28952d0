"""PCM16 WAV input/output and the in-memory audio container."""

import wave
from dataclasses import dataclass

import numpy as np

from .errors import MalformedFile, UnsupportedFormat

DEFAULT_SAMPLE_RATE = 16000


@dataclass(frozen=True)
class AudioClip:
    """Mono float32 samples in [-1, 1] with a sample rate."""

    samples: np.ndarray
    sample_rate_hz: int = DEFAULT_SAMPLE_RATE

    def __post_init__(self):
        if self.sample_rate_hz <= 0:
            raise ValueError("sample_rate_hz must be positive")
        s = np.clip(np.asarray(self.samples, dtype=np.float32), -1.0, 1.0)
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    def __len__(self):
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz


def read_wav(path) -> AudioClip:
    """Read a 16-bit PCM mono or stereo WAV file.

    Stereo input is downmixed by averaging the two channels.

    Raises
    ------
    UnsupportedFormat
        Bit depth other than 16, a compressed codec, or more than two channels.
    MalformedFile
        Missing or truncated RIFF chunks.
    """
    try:
        with wave.open(str(path), "rb") as wf:
            n_channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            n_frames = wf.getnframes()
            raw = wf.readframes(n_frames)
    except wave.Error as exc:
        if str(exc).startswith("unknown format"):
            raise UnsupportedFormat(f"{path}: {exc}") from exc
        raise MalformedFile(f"{path}: {exc}") from exc
    except EOFError as exc:
        raise MalformedFile(f"{path}: truncated header") from exc

    if width != 2:
        raise UnsupportedFormat(f"{path}: {8 * width}-bit PCM, only 16-bit is supported")
    if n_channels not in (1, 2):
        raise UnsupportedFormat(f"{path}: {n_channels} channels")
    if len(raw) != n_frames * n_channels * width:
        raise MalformedFile(
            f"{path}: data chunk holds {len(raw)} bytes, header declares "
            f"{n_frames * n_channels * width}"
        )

    ints = np.frombuffer(raw, dtype="<i2").astype(np.float64)
    if n_channels == 2:
        ints = ints.reshape(-1, 2).mean(axis=1)
    return AudioClip(ints / 32768.0, rate)


def float_to_pcm16(samples) -> np.ndarray:
    # saturate rather than wrap: 1.0 -> 32767
    scaled = np.round(np.asarray(samples, dtype=np.float64) * 32768.0)
    return np.clip(scaled, -32768, 32767).astype("<i2")


def write_wav(clip: AudioClip, path) -> None:
    """Write ``clip`` as a mono 16-bit PCM WAV file."""
    if len(clip) == 0:
        raise ValueError("cannot write an empty clip")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(clip.sample_rate_hz)
        wf.writeframes(float_to_pcm16(clip.samples).tobytes())
