"""Core signal types and waveform preprocessing.

A classification unit is a 3-second mono window at 16 kHz paired with the
frame embeddings computed over the same span. Preprocessing is fixed:
resample to the target rate, cut non-overlapping 3-second windows (the
trailing remainder is dropped), then peak-normalize each window into
[-1, 1]. Peak normalization is idempotent and skipped for all-zero windows.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptySignal, SequenceTooShort, ShapeError

TARGET_SAMPLE_RATE = 16_000
WINDOW_SECONDS = 3
DEFAULT_FRAME_RATE = 50.0

LABEL_GENUINE = "genuine"
LABEL_DEEPFAKE = "deepfake"
LABEL_UNKNOWN = "unknown"
LABELS = (LABEL_GENUINE, LABEL_DEEPFAKE, LABEL_UNKNOWN)


def label_to_int(label: str) -> int:
    """Map a corpus label to the numeric convention 1 = genuine, 0 = deepfake."""
    if label == LABEL_GENUINE:
        return 1
    if label == LABEL_DEEPFAKE:
        return 0
    raise ValueError(f"label {label!r} has no numeric encoding")


@dataclass(frozen=True, eq=False)
class Waveform:
    """Mono waveform with dimensionless amplitude.

    Samples are stored as float64 regardless of the on-disk encoding. After
    preprocessing, amplitudes lie in [-1, 1]; raw input may exceed that.
    """

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=np.float64)
        if arr.ndim != 1:
            raise ShapeError(f"waveform samples must be 1-D, got ndim={arr.ndim}")
        if arr.size == 0:
            raise EmptySignal("waveform has no samples")
        if not np.all(np.isfinite(arr)):
            raise ShapeError("waveform contains non-finite samples")
        if int(self.sample_rate) <= 0:
            raise ValueError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    @property
    def duration(self) -> float:
        return self.samples.shape[0] / self.sample_rate


@dataclass(frozen=True, eq=False)
class EmbeddingSequence:
    """Frame embeddings at a fixed frame rate.

    ``frames`` is (T, D); kinematic features need T >= 3 so shorter
    sequences are rejected outright. The inter-frame interval is always
    derived from the rate, never stored separately.
    """

    frames: np.ndarray
    frame_rate: float = DEFAULT_FRAME_RATE

    def __post_init__(self) -> None:
        arr = np.asarray(self.frames, dtype=np.float64)
        if arr.ndim != 2:
            raise ShapeError(f"embedding frames must be 2-D, got ndim={arr.ndim}")
        if arr.shape[0] < 3:
            raise SequenceTooShort(
                f"need at least 3 frames for kinematics, got {arr.shape[0]}"
            )
        if arr.shape[1] < 1:
            raise ShapeError("embedding dimension must be at least 1")
        if not np.all(np.isfinite(arr)):
            raise ShapeError("embedding contains non-finite values")
        if float(self.frame_rate) <= 0:
            raise ValueError(f"frame_rate must be positive, got {self.frame_rate}")
        object.__setattr__(self, "frames", arr)
        object.__setattr__(self, "frame_rate", float(self.frame_rate))

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]

    @property
    def delta_t(self) -> float:
        return 1.0 / self.frame_rate


@dataclass(frozen=True, eq=False)
class Segment:
    """One classification unit: a 3-second window plus its embeddings."""

    waveform: Waveform
    embedding: EmbeddingSequence
    label: str
    source_id: str

    def __post_init__(self) -> None:
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}, got {self.label!r}")
        expected = WINDOW_SECONDS * self.waveform.sample_rate
        if self.waveform.samples.shape[0] != expected:
            raise ShapeError(
                f"segment waveform must hold exactly {expected} samples "
                f"({WINDOW_SECONDS} s at {self.waveform.sample_rate} Hz), "
                f"got {self.waveform.samples.shape[0]}"
            )
        if not self.source_id:
            raise ValueError("source_id must be non-empty")


def resample_linear(wave: Waveform, target_rate: int) -> Waveform:
    """Resample by linear interpolation on the sample grid.

    Linear interpolation is the fixed kernel of this pipeline; swap this
    function out for a windowed-sinc or polyphase kernel if aliasing ever
    matters more than simplicity.
    """
    if target_rate <= 0:
        raise ValueError(f"target_rate must be positive, got {target_rate}")
    if wave.sample_rate == target_rate:
        return wave
    n_in = wave.samples.shape[0]
    n_out = int(round(n_in * target_rate / wave.sample_rate))
    if n_out < 1:
        raise EmptySignal("resampling produced no samples")
    # Output sample i sits at time i / target_rate, i.e. at fractional
    # input index i * sample_rate / target_rate.
    positions = np.arange(n_out, dtype=np.float64) * (wave.sample_rate / target_rate)
    positions = np.minimum(positions, n_in - 1)
    out = np.interp(positions, np.arange(n_in, dtype=np.float64), wave.samples)
    return Waveform(out, target_rate)


def peak_normalize(samples: np.ndarray) -> np.ndarray:
    """Scale so max |x| is exactly 1. All-zero input is returned unchanged."""
    peak = np.max(np.abs(samples))
    if peak == 0.0:
        return samples.copy()
    return samples / peak


def preprocess(wave: Waveform, target_rate: int = TARGET_SAMPLE_RATE) -> list[Waveform]:
    """Resample, window, and peak-normalize a raw waveform.

    Returns the list of 3-second windows; audio shorter than one window
    yields an empty list, and the remainder past the last full window is
    discarded.
    """
    resampled = resample_linear(wave, target_rate)
    window = WINDOW_SECONDS * target_rate
    n_windows = resampled.samples.shape[0] // window
    out = []
    for w in range(n_windows):
        chunk = resampled.samples[w * window : (w + 1) * window]
        out.append(Waveform(peak_normalize(chunk), target_rate))
    return out
