"""Third-octave filterbank design and streaming spectrogram analysis.

Bands follow the IEC 61260-1 base-ten system: center frequencies at
1000 * G**(b/3) with G = 10**(3/10) and band number b. The standard
profile covers b = -17..11 (nominal 20 Hz to 12.5 kHz, 29 bands).

Analysis is FFT-based: each 125 ms frame is transformed once and bin
powers are summed into the band that contains the bin center. Band
edges tile exactly, so the across-band sum conserves the frame energy
that falls inside the covered range (Parseval-consistent).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Iterable, Iterator, Sequence

import numpy as np

G = 10.0 ** 0.3  # octave ratio of the base-ten system

# R10 preferred numbers used for nominal band labels, indexed by b mod 10.
_PREFERRED = (1.0, 1.25, 1.6, 2.0, 2.5, 3.15, 4.0, 5.0, 6.3, 8.0)

DEFAULT_SAMPLE_RATE = 32000
DEFAULT_FRAME_MS = 125


@dataclass(frozen=True)
class BandDefinition:
    """One third-octave band: IEC band number plus exact and nominal edges."""

    index: int
    center_hz: float
    lo_hz: float
    hi_hz: float
    nominal_hz: float


def _band_center(b: int) -> float:
    return 1000.0 * 10.0 ** (b / 10.0)


def _band_edge(b: int) -> float:
    # Lower edge of band b; identical expression yields hi(b) == lo(b+1)
    # bit-for-bit, so consecutive bands tile exactly.
    return 1000.0 * G ** ((2 * b - 1) / 6.0)


def _nominal(b: int) -> float:
    idx = b % 10
    decade = (b - idx) // 10
    return _PREFERRED[idx] * 1000.0 * 10.0 ** decade


def design_bands(fmin_hz: float, fmax_hz: float) -> list[BandDefinition]:
    """Every base-ten third-octave band whose nominal center is in [fmin, fmax].

    Raises ValueError for an inverted or empty range.
    """
    if not (0 < fmin_hz <= fmax_hz):
        raise ValueError(f"invalid band range [{fmin_hz}, {fmax_hz}]")
    # Wide scan is cheap; nominal centers are monotone in b.
    bands = []
    for b in range(-40, 41):
        nom = _nominal(b)
        if fmin_hz <= nom <= fmax_hz:
            bands.append(
                BandDefinition(
                    index=b,
                    center_hz=_band_center(b),
                    lo_hz=_band_edge(b),
                    hi_hz=_band_edge(b + 1),
                    nominal_hz=nom,
                )
            )
    if not bands:
        raise ValueError(f"no third-octave band inside [{fmin_hz}, {fmax_hz}]")
    return bands


@dataclass(frozen=True)
class FilterbankSpec:
    """Analysis profile: sample rate, frame length and the band layout.

    n_fft == frame_samples by default (no zero padding); this keeps the
    bin grid commensurate with the frame so that in-band grid sinusoids
    are conserved exactly by the band summation.
    """

    sample_rate_hz: int = DEFAULT_SAMPLE_RATE
    frame_samples: int = DEFAULT_SAMPLE_RATE // 8
    n_fft: int = DEFAULT_SAMPLE_RATE // 8
    bands: tuple[BandDefinition, ...] = ()

    def __post_init__(self):
        if not self.bands:
            object.__setattr__(self, "bands", tuple(design_bands(20.0, 12500.0)))
        if self.frame_samples != int(round(self.sample_rate_hz * DEFAULT_FRAME_MS / 1000.0)):
            raise ValueError("frame_samples must equal 125 ms of samples")
        if self.n_fft < self.frame_samples:
            raise ValueError("n_fft must be >= frame_samples")
        if self.bands[-1].hi_hz >= self.sample_rate_hz / 2:
            raise ValueError("highest band exceeds Nyquist")

    @property
    def n_bands(self) -> int:
        return len(self.bands)

    @property
    def frame_ms(self) -> int:
        return DEFAULT_FRAME_MS

    @property
    def frames_per_second(self) -> float:
        return self.sample_rate_hz / self.frame_samples

    def center_frequencies(self) -> np.ndarray:
        return np.array([b.center_hz for b in self.bands])


def standard_filterbank() -> FilterbankSpec:
    """The 29-band, 32 kHz, 125 ms profile used by the sensor."""
    return FilterbankSpec()


@lru_cache(maxsize=8)
def _bin_assignment(spec: FilterbankSpec) -> tuple[np.ndarray, np.ndarray]:
    """Per one-sided FFT bin: band index (-1 if unassigned) and Parseval weight."""
    n_bins = spec.n_fft // 2 + 1
    freqs = np.arange(n_bins) * (spec.sample_rate_hz / spec.n_fft)
    assign = np.full(n_bins, -1, dtype=np.int64)
    for i, band in enumerate(spec.bands):
        assign[(freqs >= band.lo_hz) & (freqs < band.hi_hz)] = i
    weights = np.full(n_bins, 2.0)
    weights[0] = 1.0
    if spec.n_fft % 2 == 0:
        weights[-1] = 1.0
    return assign, weights


def band_matrix(spec: FilterbankSpec, n_fft: int, sample_rate_hz: int) -> np.ndarray:
    """0/1 matrix summing one-sided power-spectrum bins into bands.

    Shape (n_bands, n_fft//2+1). Used by the privacy-audit pseudoinverse;
    bins whose centers fall outside every band map to all-zero columns,
    and low bands narrower than the bin spacing yield all-zero rows.
    """
    n_bins = n_fft // 2 + 1
    freqs = np.arange(n_bins) * (sample_rate_hz / n_fft)
    m = np.zeros((spec.n_bands, n_bins))
    for i, band in enumerate(spec.bands):
        m[i, (freqs >= band.lo_hz) & (freqs < band.hi_hz)] = 1.0
    return m


@dataclass
class ThirdOctaveFrame:
    """Per-band mean-square power (linear, digital full-scale) for one frame."""

    band_power: np.ndarray
    frame_index: int = 0


@dataclass
class ThirdOctaveSpectrogram:
    spec: FilterbankSpec
    frames: list[ThirdOctaveFrame]
    start_time_ms: int = 0

    def __len__(self) -> int:
        return len(self.frames)

    def power_matrix(self) -> np.ndarray:
        """Frames stacked as a (n_frames, n_bands) array."""
        if not self.frames:
            return np.zeros((0, self.spec.n_bands))
        return np.stack([f.band_power for f in self.frames])

    @property
    def duration_s(self) -> float:
        return len(self.frames) * self.spec.frame_samples / self.spec.sample_rate_hz


def analyze_frame(samples: np.ndarray, spec: FilterbankSpec) -> ThirdOctaveFrame:
    """Band powers of one frame.

    One-sided power spectrum of the unwindowed frame (zero-padded to
    n_fft if larger), bins summed per band. Normalized so the sum over
    all assigned and unassigned bins equals the frame's mean square.
    """
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 1 or samples.shape[0] != spec.frame_samples:
        raise ValueError(
            f"expected {spec.frame_samples} samples, got shape {samples.shape}"
        )
    if not np.all(np.isfinite(samples)):
        raise ValueError("non-finite samples in frame")
    spectrum = np.fft.rfft(samples, n=spec.n_fft)
    assign, weights = _bin_assignment(spec)
    power = weights * np.abs(spectrum) ** 2 / (spec.frame_samples * spec.n_fft)
    band_power = np.zeros(spec.n_bands)
    valid = assign >= 0
    np.add.at(band_power, assign[valid], power[valid])
    return ThirdOctaveFrame(band_power=band_power)


class StreamAnalyzer:
    """Stateful frame cutter: feed arbitrary sample chunks, collect frames.

    Single-owner: one execution context at a time. The internal buffer
    never exceeds one frame; a trailing partial frame is discarded when
    the stream ends.
    """

    def __init__(self, spec: FilterbankSpec):
        self.spec = spec
        self._residual = np.zeros(0)
        self._next_index = 0

    def push(self, samples: Sequence[float]) -> list[ThirdOctaveFrame]:
        data = np.concatenate([self._residual, np.asarray(samples, dtype=np.float64)])
        n = self.spec.frame_samples
        frames = []
        offset = 0
        while offset + n <= data.shape[0]:
            frame = analyze_frame(data[offset : offset + n], self.spec)
            frame.frame_index = self._next_index
            self._next_index += 1
            frames.append(frame)
            offset += n
        self._residual = data[offset:]
        return frames

    @property
    def pending_samples(self) -> int:
        return int(self._residual.shape[0])


def stream_analyze(
    sample_source: Iterable[Sequence[float]], spec: FilterbankSpec
) -> Iterator[ThirdOctaveFrame]:
    """Pull chunks from `sample_source`, yield one frame per 4000 samples.

    A source failure propagates after the frames already cut have been
    yielded; the trailing partial frame is dropped.
    """
    analyzer = StreamAnalyzer(spec)
    for chunk in sample_source:
        yield from analyzer.push(chunk)


def analyze_waveform(
    samples: np.ndarray, spec: FilterbankSpec, start_time_ms: int = 0
) -> ThirdOctaveSpectrogram:
    """Whole-signal convenience wrapper around the streaming analyzer."""
    analyzer = StreamAnalyzer(spec)
    frames = analyzer.push(samples)
    return ThirdOctaveSpectrogram(spec=spec, frames=frames, start_time_ms=start_time_ms)


def to_db(frame: ThirdOctaveFrame, floor_db: float = -100.0) -> np.ndarray:
    """10*log10(power) with a presentation floor; zero power maps to the floor."""
    if floor_db >= 0:
        raise ValueError("floor_db must be negative")
    power = np.asarray(frame.band_power, dtype=np.float64)
    floor_power = 10.0 ** (floor_db / 10.0)
    return 10.0 * np.log10(np.maximum(power, floor_power))


def power_to_db(power: np.ndarray, floor_db: float = -100.0) -> np.ndarray:
    """Array version of to_db for whole spectrograms."""
    if floor_db >= 0:
        raise ValueError("floor_db must be negative")
    floor_power = 10.0 ** (floor_db / 10.0)
    return 10.0 * np.log10(np.maximum(np.asarray(power, dtype=np.float64), floor_power))
