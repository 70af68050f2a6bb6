"""Privacy-audit reconstruction: third-octave frames back to audio.

This is deliberately an *attack* tool: it quantifies how much waveform
detail survives the third-octave representation. Band powers are
spread back over STFT bins with the Moore-Penrose pseudoinverse of the
band-summation matrix, then phase is retrieved with Griffin-Lim.

The STFT grid used here (1024-point window, 320-sample hop) is the
toolkit's own mel-front-end grid; the parameters are documented rather
than claimed to match any particular prior study.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import stft as _stft
from .mel import MelSpec
from .thirdoctave import ThirdOctaveSpectrogram, band_matrix


def pinv_reconstruct(
    tob: ThirdOctaveSpectrogram, spec: MelSpec | None = None
) -> np.ndarray:
    """Magnitude STFT estimate from band powers, shape (frames, n_bins).

    Each 125 ms frame's 29 band powers are mapped through the
    pseudoinverse of the band-summation matrix (which spreads a band's
    power uniformly over its bins), clamped at zero, square-rooted to
    magnitudes and repeated to the 10 ms STFT rate.
    """
    spec = spec or MelSpec()
    if not tob.frames:
        raise ValueError("empty third-octave spectrogram")
    a = band_matrix(tob.spec, spec.n_fft, spec.sample_rate_hz)
    a_pinv = np.linalg.pinv(a)
    powers = tob.power_matrix()  # (T, n_bands)
    bin_power = np.clip(powers @ a_pinv.T, 0.0, None)
    magnitudes = np.sqrt(bin_power)

    frame_s = tob.spec.frame_samples / tob.spec.sample_rate_hz
    hop_s = spec.hop_samples / spec.sample_rate_hz
    hops_per_frame = frame_s / hop_s
    n_out = int(np.ceil(len(tob.frames) * hops_per_frame))
    src = np.minimum(
        ((np.arange(n_out) + 0.5) / hops_per_frame).astype(np.int64),
        powers.shape[0] - 1,
    )
    return magnitudes[src]


@dataclass
class GriffinLimResult:
    waveform: np.ndarray
    consistency_errors: np.ndarray  # one value per iteration


def _consistency_error(spectrum: np.ndarray, target_mag: np.ndarray, n_fft: int) -> float:
    # Weighted one-sided norm == Frobenius norm over the full spectrum,
    # the quantity the alternating projections provably do not increase.
    weights = np.full(spectrum.shape[1], 2.0)
    weights[0] = 1.0
    if n_fft % 2 == 0:
        weights[-1] = 1.0
    diff = (np.abs(spectrum) - target_mag) ** 2
    return float(np.sqrt(np.sum(diff * weights[None, :])))


def griffin_lim(
    magnitude: np.ndarray,
    iters: int = 60,
    spec: MelSpec | None = None,
    seed: int = 0,
) -> GriffinLimResult:
    """Alternating-projection phase retrieval.

    Starts from seeded random phase, then repeats: least-squares iSTFT,
    forward STFT, magnitude replacement. Returns the waveform after
    `iters` iterations together with the per-iteration consistency
    error, which is non-increasing.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    spec = spec or MelSpec()
    magnitude = np.asarray(magnitude, dtype=np.float64)
    window = _stft.hann_periodic(spec.win_samples)
    rng = np.random.default_rng(seed)
    phase = np.exp(2j * np.pi * rng.random(magnitude.shape))
    spectrum = magnitude * phase

    errors = np.empty(iters)
    waveform = np.zeros((magnitude.shape[0] - 1) * spec.hop_samples + spec.win_samples)
    for i in range(iters):
        waveform = _stft.istft(spectrum, spec.n_fft, spec.hop_samples, window)
        reproj = _stft.stft(waveform, spec.n_fft, spec.hop_samples, window)
        errors[i] = _consistency_error(reproj, magnitude, spec.n_fft)
        mag = np.abs(reproj)
        unit = np.where(mag > 0, reproj / np.maximum(mag, 1e-300), 1.0)
        spectrum = magnitude * unit
    return GriffinLimResult(waveform=waveform, consistency_errors=errors)


def audit_reconstruct(
    tob: ThirdOctaveSpectrogram,
    iters: int = 60,
    spec: MelSpec | None = None,
    seed: int = 0,
) -> GriffinLimResult:
    """Full privacy-audit chain: pseudoinverse magnitudes + Griffin-Lim."""
    magnitude = pinv_reconstruct(tob, spec)
    return griffin_lim(magnitude, iters=iters, spec=spec, seed=seed)
