"""Short-time Fourier transform helpers shared by the mel front end and
the privacy-audit inversion.

Two framing conventions are used:

* `stft_centered` pads by reflection and cuts ceil(N/hop) frames whose
  centers sit at t*hop. The mel front end uses this so a 10 s clip at a
  10 ms hop yields exactly 1000 frames.
* `stft`/`istft` use plain left-aligned frames with no padding. The
  inversion path needs the exact least-squares iSTFT of this operator
  so Griffin-Lim's consistency error is non-increasing.
"""

from __future__ import annotations

import numpy as np


def hann_periodic(n: int) -> np.ndarray:
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _frame(x: np.ndarray, win_samples: int, hop: int) -> np.ndarray:
    n_frames = 1 + (len(x) - win_samples) // hop
    idx = np.arange(win_samples)[None, :] + hop * np.arange(n_frames)[:, None]
    return x[idx]


def stft_centered(x: np.ndarray, n_fft: int, hop: int, window: np.ndarray) -> np.ndarray:
    """Complex STFT, frames x hz bins, frame t centered at sample t*hop.

    Reflect-padded; frame count is ceil(len(x)/hop). Input must be at
    least one window long.
    """
    x = np.asarray(x, dtype=np.float64)
    if len(x) < len(window):
        raise ValueError(f"input shorter than one window ({len(window)} samples)")
    n_frames = -(-len(x) // hop)  # ceil
    half = len(window) // 2
    needed = (n_frames - 1) * hop + len(window)
    pad_right = max(0, needed - half - len(x))
    padded = np.pad(x, (half, pad_right), mode="reflect")
    frames = _frame(padded, len(window), hop) * window[None, :]
    return np.fft.rfft(frames, n=n_fft, axis=1)


def stft(x: np.ndarray, n_fft: int, hop: int, window: np.ndarray) -> np.ndarray:
    """Left-aligned STFT without padding: frame t covers [t*hop, t*hop+win)."""
    x = np.asarray(x, dtype=np.float64)
    if len(x) < len(window):
        raise ValueError(f"input shorter than one window ({len(window)} samples)")
    frames = _frame(x, len(window), hop) * window[None, :]
    return np.fft.rfft(frames, n=n_fft, axis=1)


def istft(spec: np.ndarray, n_fft: int, hop: int, window: np.ndarray) -> np.ndarray:
    """Least-squares inverse of `stft` (weighted overlap-add).

    Returns the signal x of length (T-1)*hop + win minimizing
    ||stft(x) - spec||_F.
    """
    frames = np.fft.irfft(spec, n=n_fft, axis=1)[:, : len(window)]
    n_frames = frames.shape[0]
    length = (n_frames - 1) * hop + len(window)
    num = np.zeros(length)
    den = np.zeros(length)
    wsq = window * window
    for t in range(n_frames):
        start = t * hop
        num[start : start + len(window)] += frames[t] * window
        den[start : start + len(window)] += wsq
    # Hann endpoints are zero; guard the unreachable samples.
    return num / np.maximum(den, 1e-12)


def power_spectrum(spec: np.ndarray) -> np.ndarray:
    return np.abs(spec) ** 2
