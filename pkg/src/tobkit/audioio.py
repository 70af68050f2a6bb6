"""RIFF/WAVE I/O: PCM 16-bit mono, stdlib only."""

from __future__ import annotations

import wave
from pathlib import Path

import numpy as np


class WavFormatError(ValueError):
    pass


def write_wav(path: str | Path, samples: np.ndarray, sample_rate_hz: int) -> None:
    samples = np.asarray(samples, dtype=np.float64)
    pcm = np.clip(np.round(samples * 32767.0), -32768, 32767).astype("<i2")
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate_hz)
        wf.writeframes(pcm.tobytes())


def read_wav_mono(path: str | Path) -> tuple[np.ndarray, int]:
    """Read a PCM WAV as float64 in [-1, 1). Mono only; 16/32-bit int."""
    with wave.open(str(path), "rb") as wf:
        channels = wf.getnchannels()
        width = wf.getsampwidth()
        rate = wf.getframerate()
        raw = wf.readframes(wf.getnframes())
    if channels != 1:
        raise WavFormatError(f"expected mono input, got {channels} channels")
    if width == 2:
        samples = np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    elif width == 4:
        samples = np.frombuffer(raw, dtype="<i4").astype(np.float64) / 2147483648.0
    else:
        raise WavFormatError(f"unsupported sample width {width * 8} bits")
    return samples, rate
