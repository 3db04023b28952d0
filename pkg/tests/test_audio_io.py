import struct
import wave

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from spectropitch.audio_io import AudioClip, read_wav, write_wav
from spectropitch.errors import MalformedFile, UnsupportedFormat


def _write_raw(path, data, channels=1, width=2, rate=16000):
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(channels)
        wf.setsampwidth(width)
        wf.setframerate(rate)
        wf.writeframes(data)


def test_int16_scaling(tmp_path):
    p = tmp_path / "a.wav"
    _write_raw(p, np.array([16384, -16384, 0], "<i2").tobytes())
    clip = read_wav(p)
    assert clip.sample_rate_hz == 16000
    np.testing.assert_array_equal(clip.samples, [0.5, -0.5, 0.0])


def test_stereo_downmix(tmp_path):
    p = tmp_path / "s.wav"
    left, right = round(0.2 * 32768), round(0.4 * 32768)
    _write_raw(p, np.array([left, right, right, left], "<i2").tobytes(), channels=2)
    clip = read_wav(p)
    assert len(clip) == 2
    np.testing.assert_allclose(clip.samples, [0.3, 0.3], atol=1 / 32768)
    # order independent
    assert clip.samples[0] == clip.samples[1]


def test_24bit_rejected(tmp_path):
    p = tmp_path / "x.wav"
    _write_raw(p, b"\x00" * 30, width=3)
    with pytest.raises(UnsupportedFormat):
        read_wav(p)


def test_compressed_codec_rejected(tmp_path):
    p = tmp_path / "alaw.wav"
    fmt = struct.pack("<HHIIHH", 6, 1, 8000, 8000, 1, 8)
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt + b"data" + struct.pack("<I", 4) + b"\x00" * 4
    p.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
    with pytest.raises(UnsupportedFormat):
        read_wav(p)


def test_truncated_file(tmp_path):
    p = tmp_path / "t.wav"
    write_wav(AudioClip(np.zeros(1000)), p)
    raw = p.read_bytes()
    p.write_bytes(raw[:-100])
    with pytest.raises(MalformedFile):
        read_wav(p)
    p.write_bytes(raw[:20])
    with pytest.raises(MalformedFile):
        read_wav(p)


def test_sine_round_trip(tmp_path):
    t = np.arange(16000) / 16000
    clip = AudioClip(0.9 * np.sin(2 * np.pi * 440 * t))
    write_wav(clip, tmp_path / "sine.wav")
    back = read_wav(tmp_path / "sine.wav")
    assert np.max(np.abs(back.samples - clip.samples)) <= 1 / 32768


def test_saturation(tmp_path):
    write_wav(AudioClip(np.array([1.0, -1.0])), tmp_path / "sat.wav")
    with wave.open(str(tmp_path / "sat.wav")) as wf:
        ints = np.frombuffer(wf.readframes(2), "<i2")
    assert list(ints) == [32767, -32768]
    back = read_wav(tmp_path / "sat.wav")
    assert back.samples[0] == pytest.approx(0.99997, abs=1e-5)


def test_empty_clip_rejected(tmp_path):
    with pytest.raises(ValueError):
        write_wav(AudioClip(np.zeros(0)), tmp_path / "e.wav")


def test_clip_invariants():
    clip = AudioClip(np.array([2.0, -3.0, 0.5]))
    np.testing.assert_array_equal(clip.samples, [1.0, -1.0, 0.5])
    with pytest.raises(ValueError):
        AudioClip(np.zeros(3), 0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-1.0, 1.0), min_size=1, max_size=200))
def test_round_trip_property(tmp_path_factory, values):
    path = tmp_path_factory.mktemp("rt") / "c.wav"
    clip = AudioClip(np.array(values))
    write_wav(clip, path)
    back = read_wav(path)
    assert np.max(np.abs(back.samples.astype(float) - clip.samples.astype(float))) <= 1 / 32768 + 1e-7
