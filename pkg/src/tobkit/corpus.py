"""Deterministic synthetic ward-like audio corpus.

Real ward recordings are privacy-restricted by construction, so
training and end-to-end tests run on seeded synthetic clips. The four
classes are designed to differ in time-frequency structure the way the
real sources do: footsteps make vertical (broadband, transient)
spectrogram stripes, an oxygenator makes horizontal (tonal, steady)
ones, conversation is band-limited noise with syllabic modulation and
alarms are repeating beep melodies.

Class order is fixed; targets and the toy classifier's label space use
the general-taxonomy source names so the ward label mapping applies
verbatim (the oxygenator surrogate is labeled "Train", the alarm
surrogate "Electronic music").
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

CLASSES = ("conversation", "footsteps", "oxygenator", "alarm")
SOURCE_CLASS_NAMES = ("Conversation", "Walk, footsteps", "Train", "Electronic music")

DEFAULT_SAMPLE_RATE = 32000
DEFAULT_DURATION_S = 10.0


@dataclass(frozen=True)
class ClipRecipe:
    classes: tuple[str, ...] = ()
    duration_s: float = DEFAULT_DURATION_S
    seed: int = 0
    snr_db: float = 6.0
    sample_rate: int = DEFAULT_SAMPLE_RATE
    rms_dbfs: float = -25.0

    def __post_init__(self):
        for c in self.classes:
            if c not in CLASSES:
                raise ValueError(f"unknown class {c!r}")


def _pink_noise(rng: np.random.Generator, n: int) -> np.ndarray:
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0)
    scale = np.zeros_like(freqs)
    scale[1:] = 1.0 / np.sqrt(freqs[1:])
    x = np.fft.irfft(spectrum * scale, n=n)
    return x / max(_rms(x), 1e-12)


def _rms(x: np.ndarray) -> float:
    return float(np.sqrt(np.mean(x * x)))


def _bandpass_noise(rng: np.random.Generator, n: int, sr: int, lo: float, hi: float) -> np.ndarray:
    white = rng.standard_normal(n)
    spectrum = np.fft.rfft(white)
    freqs = np.fft.rfftfreq(n, d=1.0 / sr)
    spectrum[(freqs < lo) | (freqs > hi)] = 0.0
    x = np.fft.irfft(spectrum, n=n)
    return x / max(_rms(x), 1e-12)


def _conversation(rng: np.random.Generator, n: int, sr: int) -> np.ndarray:
    x = _bandpass_noise(rng, n, sr, 300.0, 3000.0)
    t = np.arange(n) / sr
    f_syllable = rng.uniform(3.0, 5.0)
    am = 0.55 + 0.45 * np.sin(2 * np.pi * f_syllable * t + rng.uniform(0, 2 * np.pi))
    # utterance/pause envelope, a few seconds per phrase
    f_phrase = rng.uniform(0.15, 0.35)
    phrase = 0.5 + 0.5 * np.sin(2 * np.pi * f_phrase * t + rng.uniform(0, 2 * np.pi))
    return x * am * (0.3 + 0.7 * phrase)


def _footsteps(rng: np.random.Generator, n: int, sr: int) -> np.ndarray:
    x = np.zeros(n)
    rate = rng.uniform(1.5, 2.5)
    period = sr / rate
    tau = rng.uniform(0.03, 0.07) * sr
    burst_len = int(6 * tau)
    envelope = np.exp(-np.arange(burst_len) / tau)
    pos = rng.uniform(0.0, period)
    while pos < n:
        start = int(pos)
        length = min(burst_len, n - start)
        burst = rng.standard_normal(length) * envelope[:length]
        x[start : start + length] += burst * rng.uniform(0.6, 1.0)
        pos += period * rng.uniform(0.9, 1.1)
    return x / max(_rms(x), 1e-12)


def _oxygenator(rng: np.random.Generator, n: int, sr: int) -> np.ndarray:
    t = np.arange(n) / sr
    f0 = rng.uniform(50.0, 120.0)
    x = np.zeros(n)
    for h in range(1, 9):
        x += np.sin(2 * np.pi * f0 * h * t + rng.uniform(0, 2 * np.pi)) / h
    pedestal = _bandpass_noise(rng, n, sr, 100.0, 8000.0)
    x = x / max(_rms(x), 1e-12) + 0.35 * pedestal
    return x / max(_rms(x), 1e-12)


def _alarm(rng: np.random.Generator, n: int, sr: int) -> np.ndarray:
    x = np.zeros(n)
    n_notes = rng.integers(2, 5)
    melody = rng.uniform(1000.0, 4000.0, size=n_notes)
    beep_s = rng.uniform(0.10, 0.18)
    gap_s = rng.uniform(0.06, 0.12)
    period_s = rng.uniform(0.9, 1.8)
    beep_len = int(beep_s * sr)
    ramp = int(0.005 * sr)
    env = np.ones(beep_len)
    env[:ramp] = np.linspace(0, 1, ramp)
    env[-ramp:] = np.linspace(1, 0, ramp)
    start_s = rng.uniform(0.0, 0.5)
    while start_s < n / sr:
        pos = start_s
        for f in melody:
            start = int(pos * sr)
            if start + beep_len > n:
                break
            t = np.arange(beep_len) / sr
            x[start : start + beep_len] += np.sin(2 * np.pi * f * t) * env
            pos += beep_s + gap_s
        start_s += period_s
    return x / max(_rms(x), 1e-12)


_GENERATORS = {
    "conversation": _conversation,
    "footsteps": _footsteps,
    "oxygenator": _oxygenator,
    "alarm": _alarm,
}


def synthesize(recipe: ClipRecipe) -> tuple[np.ndarray, np.ndarray]:
    """Deterministic clip for a recipe: (waveform, multilabel target).

    The target vector follows CLASSES order. Background pink noise is
    always present; each active class is mixed at recipe.snr_db above
    the background, then the whole clip is normalized to rms_dbfs (with
    a peak guard that can cost at most ~2 dB).
    """
    rng = np.random.default_rng(recipe.seed)
    n = int(round(recipe.duration_s * recipe.sample_rate))
    clip = _pink_noise(rng, n)
    gain = 10.0 ** (recipe.snr_db / 20.0)
    for cls in CLASSES:  # fixed order keeps the rng stream stable
        if cls in recipe.classes:
            clip = clip + gain * _GENERATORS[cls](rng, n, recipe.sample_rate)
    target_rms = 10.0 ** (recipe.rms_dbfs / 20.0)
    clip = clip * (target_rms / max(_rms(clip), 1e-12))
    peak = np.max(np.abs(clip))
    if peak > 0.99:
        clip = clip * (0.99 / peak)
    target = np.array([1.0 if c in recipe.classes else 0.0 for c in CLASSES])
    return clip, target


@dataclass
class DatasetSplits:
    train: list[ClipRecipe] = field(default_factory=list)
    val: list[ClipRecipe] = field(default_factory=list)
    test: list[ClipRecipe] = field(default_factory=list)

    def all_recipes(self) -> list[ClipRecipe]:
        return self.train + self.val + self.test


# Seed-range offsets guaranteeing split disjointness.
_SPLIT_OFFSETS = {"train": 0, "val": 1_000_000, "test": 2_000_000}


def build_dataset(
    n_per_class: int,
    seed: int = 0,
    n_mixtures: int | None = None,
    n_background: int | None = None,
    snr_db: float = 6.0,
) -> DatasetSplits:
    """Balanced single-class clips plus random multi-label mixtures and a
    few background-only clips, split 80/10/10 with disjoint seed ranges."""
    if n_per_class < 1:
        raise ValueError("n_per_class must be >= 1")
    if n_mixtures is None:
        n_mixtures = n_per_class
    if n_background is None:
        n_background = max(2, n_per_class // 5)

    rng = np.random.default_rng(seed)
    splits = DatasetSplits()

    def fractions(total: int) -> dict[str, int]:
        n_val = max(1, total // 10) if total >= 3 else 0
        n_test = max(1, total // 10) if total >= 3 else 0
        return {"train": total - n_val - n_test, "val": n_val, "test": n_test}

    def add(split: str, classes: tuple[str, ...], local_index: int) -> None:
        clip_seed = seed + _SPLIT_OFFSETS[split] + local_index
        getattr(splits, split).append(
            ClipRecipe(classes=classes, seed=clip_seed, snr_db=snr_db)
        )

    counters = {"train": 0, "val": 0, "test": 0}

    def emit(split: str, classes: tuple[str, ...]) -> None:
        add(split, classes, counters[split])
        counters[split] += 1

    for cls in CLASSES:
        for split, count in fractions(n_per_class).items():
            for _ in range(count):
                emit(split, (cls,))
    for split, count in fractions(n_mixtures).items():
        for _ in range(count):
            k = int(rng.integers(2, 4))
            classes = tuple(rng.choice(CLASSES, size=k, replace=False))
            emit(split, classes)
    for split, count in fractions(n_background).items():
        for _ in range(count):
            emit(split, ())
    return splits


def with_seed_offset(recipe: ClipRecipe, offset: int) -> ClipRecipe:
    return replace(recipe, seed=recipe.seed + offset)
