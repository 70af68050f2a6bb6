"""Append-only binary container for third-octave spectrograms (.tob).

Layout, all multi-byte values little-endian:

    offset  size  field
    0       4     magic "TOB1"
    4       2     version (u16, currently 1)
    6       4     sample_rate_hz (u32)
    10      2     frame_ms (u16)
    12      2     n_bands (u16)
    14      4*n   band_centers_hz (f32 each)
    ..      4     calibration_db (f32)
    ..      8     start_time_unix_ms (u64)
    ..      -     payload: frame_count * n_bands f32 band powers

Standard profile header is 142 bytes. The writer flushes after every
frame so a power cut costs at most one frame; the reader drops a torn
trailing partial frame with a warning.
"""

from __future__ import annotations

import io
import struct
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .thirdoctave import (
    FilterbankSpec,
    ThirdOctaveFrame,
    ThirdOctaveSpectrogram,
    design_bands,
    standard_filterbank,
)

MAGIC = b"TOB1"
VERSION = 1
_FIXED_HEAD = struct.Struct("<4sHIHH")  # magic, version, rate, frame_ms, n_bands
_TAIL = struct.Struct("<fQ")  # calibration_db, start_time_unix_ms


@dataclass
class TobHeader:
    sample_rate_hz: int = 32000
    frame_ms: int = 125
    band_centers_hz: np.ndarray = field(
        default_factory=lambda: standard_filterbank().center_frequencies()
    )
    calibration_db: float = 0.0
    start_time_unix_ms: int = 0
    version: int = VERSION
    magic: bytes = MAGIC

    @property
    def n_bands(self) -> int:
        return len(self.band_centers_hz)

    @property
    def size_bytes(self) -> int:
        return _FIXED_HEAD.size + 4 * self.n_bands + _TAIL.size

    @property
    def frame_bytes(self) -> int:
        return 4 * self.n_bands

    def validate(self) -> None:
        if self.magic != MAGIC:
            raise TobFormatError(f"bad magic {self.magic!r}")
        if self.version != VERSION:
            raise TobFormatError(f"unsupported version {self.version}")
        if self.n_bands < 1:
            raise TobFormatError("header has no bands")
        centers = np.asarray(self.band_centers_hz, dtype=np.float64)
        if np.any(np.diff(centers) <= 0):
            raise TobFormatError("band centers must be strictly increasing")

    def pack(self) -> bytes:
        self.validate()
        head = _FIXED_HEAD.pack(
            self.magic,
            self.version,
            self.sample_rate_hz,
            self.frame_ms,
            self.n_bands,
        )
        centers = np.asarray(self.band_centers_hz, dtype="<f4").tobytes()
        tail = _TAIL.pack(self.calibration_db, self.start_time_unix_ms)
        return head + centers + tail

    @classmethod
    def unpack(cls, stream: io.BufferedIOBase) -> "TobHeader":
        raw = stream.read(_FIXED_HEAD.size)
        if len(raw) < _FIXED_HEAD.size:
            raise TobFormatError("truncated header")
        magic, version, rate, frame_ms, n_bands = _FIXED_HEAD.unpack(raw)
        if magic != MAGIC:
            raise TobFormatError(f"bad magic {magic!r}")
        if version != VERSION:
            raise TobFormatError(f"unsupported version {version}")
        body = stream.read(4 * n_bands + _TAIL.size)
        if len(body) < 4 * n_bands + _TAIL.size:
            raise TobFormatError("truncated header")
        centers = np.frombuffer(body[: 4 * n_bands], dtype="<f4").astype(np.float64)
        calibration_db, start_ms = _TAIL.unpack(body[4 * n_bands :])
        header = cls(
            sample_rate_hz=rate,
            frame_ms=frame_ms,
            band_centers_hz=centers,
            calibration_db=calibration_db,
            start_time_unix_ms=start_ms,
            version=version,
            magic=magic,
        )
        header.validate()
        return header


class TobFormatError(ValueError):
    pass


class TobWriter:
    """Single-owner writer handle; one writer per file."""

    def __init__(self, path: str | Path, header: TobHeader):
        header.validate()
        self.header = header
        self.path = Path(path)
        self._fh = open(self.path, "wb")
        self._fh.write(header.pack())
        self._fh.flush()
        self.frames_written = 0

    def append_frame(self, frame: ThirdOctaveFrame | np.ndarray) -> None:
        power = frame.band_power if isinstance(frame, ThirdOctaveFrame) else frame
        power = np.asarray(power)
        if power.shape != (self.header.n_bands,):
            raise ValueError(
                f"frame has {power.shape} band powers, header says {self.header.n_bands}"
            )
        self._fh.write(power.astype("<f4").tobytes())
        self._fh.flush()
        self.frames_written += 1

    def close(self) -> None:
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self) -> "TobWriter":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


def open_writer(path: str | Path, header: TobHeader) -> TobWriter:
    return TobWriter(path, header)


def append_frame(writer: TobWriter, frame: ThirdOctaveFrame) -> None:
    writer.append_frame(frame)


def _spec_from_header(header: TobHeader) -> FilterbankSpec:
    """Rebuild a FilterbankSpec whose exact band layout matches the header.

    Band centers are stored as f32; match each against the designed band
    grid (nearest exact center) so edges stay exact.
    """
    designed = design_bands(10.0, header.sample_rate_hz / 2.0)
    centers = np.asarray(header.band_centers_hz, dtype=np.float64)
    exact = np.array([b.center_hz for b in designed])
    bands = []
    for c in centers:
        i = int(np.argmin(np.abs(exact - c)))
        if abs(exact[i] - c) / exact[i] > 1e-4:
            raise TobFormatError(f"band center {c} Hz is not a third-octave center")
        bands.append(designed[i])
    frame_samples = int(round(header.sample_rate_hz * header.frame_ms / 1000.0))
    return FilterbankSpec(
        sample_rate_hz=header.sample_rate_hz,
        frame_samples=frame_samples,
        n_fft=frame_samples,
        bands=tuple(bands),
    )


def read_file(path: str | Path) -> ThirdOctaveSpectrogram:
    """Read a .tob file; torn trailing bytes are dropped with a warning."""
    path = Path(path)
    with open(path, "rb") as fh:
        header = TobHeader.unpack(fh)
        payload = fh.read()
    frame_bytes = header.frame_bytes
    n_frames, leftover = divmod(len(payload), frame_bytes)
    if leftover:
        warnings.warn(
            f"{path.name}: dropping {leftover} trailing bytes (torn write)",
            stacklevel=2,
        )
        payload = payload[: n_frames * frame_bytes]
    data = np.frombuffer(payload, dtype="<f4").reshape(n_frames, header.n_bands)
    spec = _spec_from_header(header)
    frames = [
        ThirdOctaveFrame(band_power=data[i].astype(np.float64), frame_index=i)
        for i in range(n_frames)
    ]
    return ThirdOctaveSpectrogram(
        spec=spec, frames=frames, start_time_ms=header.start_time_unix_ms
    )


def read_header(path: str | Path) -> TobHeader:
    with open(path, "rb") as fh:
        return TobHeader.unpack(fh)
