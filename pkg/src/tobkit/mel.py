"""Log-mel spectrograms and the linear third-octave-to-mel baseline.

The mel front end matches the convention of the large pretrained
audio taggers this toolkit feeds: 32 kHz input, 1024-sample periodic
Hann window, 320-sample (10 ms) hop, 64 HTK-mel bins between 50 Hz and
14 kHz, log10 power with a floor.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import stft as _stft
from .thirdoctave import ThirdOctaveSpectrogram, power_to_db

LOG_FLOOR = -10.0  # log10 power floor (-100 dB)


def hz_to_mel(f):
    """HTK mel curve."""
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@dataclass(frozen=True)
class MelSpec:
    sample_rate_hz: int = 32000
    n_mels: int = 64
    hop_samples: int = 320
    win_samples: int = 1024
    n_fft: int = 1024
    fmin_hz: float = 50.0
    fmax_hz: float = 14000.0
    log_floor: float = LOG_FLOOR

    def __post_init__(self):
        if self.hop_samples != int(round(self.sample_rate_hz * 0.010)):
            raise ValueError("hop must be 10 ms of samples")
        if self.n_fft < self.win_samples:
            raise ValueError("n_fft must be >= win_samples")

    @property
    def n_bins(self) -> int:
        return self.n_fft // 2 + 1

    @property
    def frames_per_second(self) -> float:
        return self.sample_rate_hz / self.hop_samples

    def mel_center_frequencies(self) -> np.ndarray:
        pts = np.linspace(hz_to_mel(self.fmin_hz), hz_to_mel(self.fmax_hz), self.n_mels + 2)
        return mel_to_hz(pts)[1:-1]


@dataclass
class MelSpectrogram:
    """Log10-power mel spectrogram, data shape (n_frames, n_mels)."""

    spec: MelSpec
    data: np.ndarray

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def duration_s(self) -> float:
        return self.n_frames * self.spec.hop_samples / self.spec.sample_rate_hz


@lru_cache(maxsize=4)
def mel_filterbank(spec: MelSpec) -> np.ndarray:
    """Triangular HTK filters, peak 1.0, shape (n_mels, n_fft//2+1)."""
    pts = mel_to_hz(
        np.linspace(hz_to_mel(spec.fmin_hz), hz_to_mel(spec.fmax_hz), spec.n_mels + 2)
    )
    freqs = np.arange(spec.n_bins) * (spec.sample_rate_hz / spec.n_fft)
    fb = np.zeros((spec.n_mels, spec.n_bins))
    for m in range(spec.n_mels):
        left, center, right = pts[m], pts[m + 1], pts[m + 2]
        rising = (freqs - left) / (center - left)
        falling = (right - freqs) / (right - center)
        fb[m] = np.clip(np.minimum(rising, falling), 0.0, None)
    return fb


def mel_from_waveform(samples: np.ndarray, spec: MelSpec | None = None) -> MelSpectrogram:
    """Ground-truth log-mel of a waveform.

    Centered STFT (periodic Hann, reflect padding), one-sided power,
    triangular mel weighting, log10 with floor. A clip of N samples
    yields ceil(N/hop) frames, so 10 s -> 1000 frames.
    """
    spec = spec or MelSpec()
    samples = np.asarray(samples, dtype=np.float64)
    if not np.all(np.isfinite(samples)):
        raise ValueError("non-finite samples")
    window = _stft.hann_periodic(spec.win_samples)
    spectrum = _stft.stft_centered(samples, spec.n_fft, spec.hop_samples, window)
    power = _stft.power_spectrum(spectrum)
    mel_power = power @ mel_filterbank(spec).T
    data = np.log10(np.maximum(mel_power, 10.0 ** spec.log_floor))
    return MelSpectrogram(spec=spec, data=data)


def linear_transcode(tob: ThirdOctaveSpectrogram, spec: MelSpec | None = None) -> MelSpectrogram:
    """Non-neural baseline: nearest-frame time upsampling plus linear
    interpolation over log-frequency from band centers to mel centers.

    Blurry by construction; serves as the reference the trained
    transcoder must beat.
    """
    spec = spec or MelSpec()
    if not tob.frames:
        raise ValueError("empty third-octave spectrogram")
    frame_s = tob.spec.frame_samples / tob.spec.sample_rate_hz
    hop_s = spec.hop_samples / spec.sample_rate_hz
    hops_per_frame = frame_s / hop_s  # 12.5 for the standard profile

    band_db = power_to_db(tob.power_matrix(), floor_db=10.0 * spec.log_floor)
    band_log = band_db / 10.0  # log10 power
    log_band_centers = np.log(tob.spec.center_frequencies())
    log_mel_centers = np.log(spec.mel_center_frequencies())

    freq_interp = np.empty((band_log.shape[0], spec.n_mels))
    for i in range(band_log.shape[0]):
        freq_interp[i] = np.interp(log_mel_centers, log_band_centers, band_log[i])

    n_out = int(np.ceil(len(tob.frames) * hops_per_frame))
    src = np.minimum(
        ((np.arange(n_out) + 0.5) / hops_per_frame).astype(np.int64),
        band_log.shape[0] - 1,
    )
    data = np.maximum(freq_interp[src], spec.log_floor)
    return MelSpectrogram(spec=spec, data=data)
