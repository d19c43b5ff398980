"""Physics-style features from embedding kinematics and waveform dynamics.

The embedding sequence is treated as a trajectory sampled every
1/frame_rate seconds. Finite differences give per-frame velocities and
accelerations, and the six features below summarize how fast, how
periodically, and how freely that trajectory moves, plus how much dynamic
range the paired waveform retains:

* translational shift: mean velocity norm plus half the mean acceleration
  norm.
* vibrational shift: spread (population std, scaled by ``alpha``) of the
  dominant non-DC spectral bin across embedding dimensions, each dimension
  Hann-windowed before its DFT.
* rotational shift: ``beta`` times the mean magnitude of the generalized
  cross product between consecutive velocities and their change. In three
  dimensions this is the literal cross-product norm; in general dimension
  the Lagrange identity ||v||^2 ||dv||^2 - (v . dv)^2 gives the squared
  area of the spanned parallelogram.
* dynamic range: 20 log10 of peak amplitude over the 10th percentile of
  absolute amplitude.
* mean velocity magnitude and the coefficient of variation of the
  frame-to-frame spectral-flux proxy ||E_{i+1} - E_i||.
"""

from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .errors import SequenceTooShort
from .signals import EmbeddingSequence, Segment, Waveform

ALPHA_VIBRATIONAL = 0.01
BETA_ROTATIONAL = 0.1

# Denominator floor for the dynamic-range ratio; keeps near-silent signals
# finite instead of raising.
_QUIET_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class KinematicsDerivatives:
    """First and second finite differences of an embedding trajectory."""

    velocities: np.ndarray  # (T-1, D)
    accelerations: np.ndarray  # (T-2, D)


@dataclass(frozen=True)
class PhysicsVector:
    """The six waveform/trajectory features for one segment."""

    translational_shift: float
    vibrational_shift: float
    rotational_shift: float
    dynamic_range_db: float
    mean_velocity_magnitude: float
    temporal_frequency_variation: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, f.name) for f in fields(self)], dtype=np.float64)


N_PHYSICS_FEATURES = len(fields(PhysicsVector))


def kinematics(seq: EmbeddingSequence) -> KinematicsDerivatives:
    """Finite-difference velocities and accelerations in embedding units per second."""
    if seq.n_frames < 3:
        raise SequenceTooShort(f"kinematics needs T >= 3, got {seq.n_frames}")
    dt = seq.delta_t
    velocities = np.diff(seq.frames, axis=0) / dt
    accelerations = np.diff(velocities, axis=0) / dt
    return KinematicsDerivatives(velocities, accelerations)


def translational_shift(kin: KinematicsDerivatives) -> float:
    """Mean speed plus half the mean acceleration magnitude."""
    v_norm = np.linalg.norm(kin.velocities, axis=1)
    a_norm = np.linalg.norm(kin.accelerations, axis=1)
    return float(np.mean(v_norm) + 0.5 * np.mean(a_norm))


def hann_window(n: int) -> np.ndarray:
    """Periodic Hann taper; an exact-bin sinusoid keeps its peak exactly on-bin."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def vibrational_shift(seq: EmbeddingSequence, alpha: float = ALPHA_VIBRATIONAL) -> float:
    """Spread of the dominant oscillation bin across embedding dimensions.

    Each dimension's time series is Hann-windowed; the dominant bin is the
    argmax of the one-sided power spectrum with DC excluded. The result is
    ``alpha`` times the population standard deviation of those bin indices,
    so a trajectory whose dimensions all oscillate at one shared frequency
    scores zero.
    """
    t = seq.n_frames
    if t < 4:
        raise SequenceTooShort(f"vibrational shift needs T >= 4, got {t}")
    windowed = seq.frames * hann_window(t)[:, None]
    spectrum = np.abs(np.fft.rfft(windowed, axis=0)) ** 2
    # Bin 0 is the windowed mean, not an oscillation; drop it before argmax.
    peak_bins = np.argmax(spectrum[1:], axis=0) + 1
    return float(alpha * np.std(peak_bins.astype(np.float64)))


def rotational_shift(kin: KinematicsDerivatives, beta: float = BETA_ROTATIONAL) -> float:
    """Mean parallelogram area between consecutive velocities, scaled by ``beta``.

    Uses the Lagrange identity so the cross-product magnitude generalizes
    to any embedding dimension; the squared form is clamped at zero before
    the square root to absorb rounding.
    """
    v = kin.velocities
    if v.shape[0] < 3:
        raise SequenceTooShort(
            f"rotational shift needs T >= 4 (at least 3 velocities), got {v.shape[0] + 1} frames"
        )
    head = v[:-1]
    dv = v[1:] - v[:-1]
    sq = (
        np.sum(head * head, axis=1) * np.sum(dv * dv, axis=1)
        - np.sum(head * dv, axis=1) ** 2
    )
    areas = np.sqrt(np.maximum(sq, 0.0))
    return float(beta * np.mean(areas))


def dynamic_range_db(wave: Waveform) -> float:
    """20 log10(peak / 10th percentile of |x|), floored denominator.

    An all-zero waveform has no meaningful ratio and scores 0 dB by
    convention. The percentile uses linear interpolation between order
    statistics.
    """
    magnitude = np.abs(wave.samples)
    peak = float(np.max(magnitude))
    if peak == 0.0:
        return 0.0
    quiet = float(np.percentile(magnitude, 10.0))
    return float(20.0 * np.log10(peak / max(quiet, _QUIET_FLOOR)))


def mean_velocity_magnitude(kin: KinematicsDerivatives) -> float:
    return float(np.mean(np.linalg.norm(kin.velocities, axis=1)))


def temporal_frequency_variation(seq: EmbeddingSequence) -> float:
    """Coefficient of variation of the frame-to-frame spectral-flux proxy.

    Flux is ||E_{i+1} - E_i||; dividing its population std by its mean makes
    the feature invariant to embedding scale and frame rate. A constant
    trajectory has zero flux everywhere and scores 0.
    """
    if seq.n_frames < 3:
        raise SequenceTooShort(f"flux variation needs T >= 3, got {seq.n_frames}")
    flux = np.linalg.norm(np.diff(seq.frames, axis=0), axis=1)
    mean = float(np.mean(flux))
    if mean == 0.0:
        return 0.0
    return float(np.std(flux) / mean)


def physics_vector(segment: Segment) -> PhysicsVector:
    """All six features for one segment; component errors propagate."""
    kin = kinematics(segment.embedding)
    return PhysicsVector(
        translational_shift=translational_shift(kin),
        vibrational_shift=vibrational_shift(segment.embedding),
        rotational_shift=rotational_shift(kin),
        dynamic_range_db=dynamic_range_db(segment.waveform),
        mean_velocity_magnitude=mean_velocity_magnitude(kin),
        temporal_frequency_variation=temporal_frequency_variation(segment.embedding),
    )


class PhysicsFeatureExtractor(BaseEstimator, TransformerMixin):
    """Stateless transformer mapping segments to the 6-column feature matrix."""

    def fit(self, X, y=None):
        return self

    def transform(self, X) -> np.ndarray:
        rows = [physics_vector(seg).as_array() for seg in X]
        if not rows:
            return np.empty((0, N_PHYSICS_FEATURES), dtype=np.float64)
        return np.vstack(rows)

    def get_feature_names_out(self, input_features=None) -> np.ndarray:
        return np.array([f.name for f in fields(PhysicsVector)], dtype=object)
