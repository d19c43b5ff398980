"""Synthetic paired corpus for desk-scale experiments.

Embeddings are smoothed Gaussian random walks; the deepfake class rescales
the walk increments so its velocity statistics sit below the genuine ones.
Each segment also carries a waveform whose amplitude envelope spans a wide
range for genuine speech and a compressed range for deepfakes.

The two classes differ in spread, not just location. Genuine segments are
heterogeneous: a wide per-segment tempo factor and a wide dynamic-range
draw stand in for speaker and style variation. Deepfakes are statistically
narrow, the way over-smoothed synthesis output is: a tight tempo spread
around the compressed velocity scale, and a dynamic range drawn as a
genuine-style draw minus a compression drop. The fake cloud therefore sits
inside the quiet, slow slice of the genuine distribution. A detector
trained on this corpus stays genuinely unsure about most fakes (any one of
them could be a subdued genuine speaker) while the lively majority of
genuine segments cannot be confused with anything fake, which reproduces
the class-conditional uncertainty ordering seen on real corpora.

Per-segment tempo factors are mean-one lognormals so class-mean velocity
ratios stay exactly at velocity_scale_fake in expectation.

The walk start point is drawn with a large scale so the pooled (mean)
embedding is dominated by shared content variation rather than by the
class-dependent walk spread; without that, the pooled coordinates leak a
shell-radius cue that inverts the uncertainty ordering between classes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ScenarioError
from .rngutil import substream
from .signals import (
    LABEL_DEEPFAKE,
    LABEL_GENUINE,
    EmbeddingSequence,
    Segment,
    Waveform,
)

_ENVELOPE_CONTROL_POINTS = 32
_CARRIER_HZ_RANGE = (80.0, 1000.0)


@dataclass(frozen=True)
class SyntheticCorpusSpec:
    """Parameters of one synthetic corpus draw."""

    n_genuine: int
    n_fake: int
    seed: int = 0
    dims: int = 16
    length: int = 150
    frame_rate: float = 50.0
    sample_rate: int = 16_000
    velocity_scale_fake: float = 0.8586
    smoothness: float = 0.5
    segment_scale_jitter: float = 0.25
    fake_scale_jitter: float = 0.06
    start_scale: float = 25.0
    dyn_range_db_genuine: float = 30.0
    dyn_range_db_genuine_spread: float = 12.0
    fake_dyn_drop_min: float = 2.0
    fake_dyn_drop_max: float = 10.0

    def __post_init__(self) -> None:
        if self.n_genuine < 1 or self.n_fake < 1:
            raise ScenarioError("corpus needs at least one segment per class")
        if self.dims < 1:
            raise ScenarioError("dims must be at least 1")
        if self.length < 3:
            raise ScenarioError("length must be at least 3 frames")
        if self.frame_rate <= 0 or self.sample_rate <= 0:
            raise ScenarioError("frame_rate and sample_rate must be positive")
        if not 0.0 < self.velocity_scale_fake <= 1.0:
            raise ScenarioError("velocity_scale_fake must lie in (0, 1]")
        if not 0.0 < self.smoothness <= 1.0:
            raise ScenarioError("smoothness must lie in (0, 1]")
        if self.segment_scale_jitter < 0 or self.fake_scale_jitter < 0:
            raise ScenarioError("scale jitters must be non-negative")
        if self.start_scale < 0:
            raise ScenarioError("start_scale must be non-negative")
        if self.dyn_range_db_genuine <= 0:
            raise ScenarioError("dyn_range_db_genuine must be a positive dB value")
        if self.dyn_range_db_genuine_spread < 0:
            raise ScenarioError("dyn_range_db_genuine_spread must be non-negative")
        if not 0.0 <= self.fake_dyn_drop_min <= self.fake_dyn_drop_max:
            raise ScenarioError("fake dyn drop range must satisfy 0 <= min <= max")


def _smoothed_increments(rng: np.random.Generator, n: int, dims: int, smoothness: float) -> np.ndarray:
    """One-pole low-passed white increments, rescaled to unit stationary variance."""
    raw = rng.standard_normal((n, dims))
    if smoothness >= 1.0:
        return raw
    out = np.empty_like(raw)
    state = raw[0]
    out[0] = state
    keep = 1.0 - smoothness
    for i in range(1, n):
        state = keep * state + smoothness * raw[i]
        out[i] = state
    # Stationary std of the filter is sqrt(c / (2 - c)) for coefficient c.
    return out / np.sqrt(smoothness / (2.0 - smoothness))


def _mean_one_lognormal(rng: np.random.Generator, sigma: float) -> float:
    """Multiplicative jitter with expectation exactly 1."""
    return float(np.exp(sigma * rng.standard_normal() - 0.5 * sigma * sigma))


def _synth_embedding(
    rng: np.random.Generator, spec: SyntheticCorpusSpec, velocity_scale: float, jitter_sigma: float
) -> EmbeddingSequence:
    # The start point stands in for segment content; it dominates the pooled
    # mean so that class identity lives in the dynamics, not the location.
    start = spec.start_scale * rng.standard_normal(spec.dims)
    increments = _smoothed_increments(rng, spec.length - 1, spec.dims, spec.smoothness)
    tempo = _mean_one_lognormal(rng, jitter_sigma)
    increments = increments * (velocity_scale * tempo)
    frames = np.vstack([start, start + np.cumsum(increments, axis=0)])
    return EmbeddingSequence(frames, spec.frame_rate)


def _synth_waveform(
    rng: np.random.Generator, spec: SyntheticCorpusSpec, range_db: float
) -> Waveform:
    n = 3 * spec.sample_rate
    control = rng.uniform(-range_db, 0.0, _ENVELOPE_CONTROL_POINTS)
    grid = np.linspace(0.0, _ENVELOPE_CONTROL_POINTS - 1.0, n)
    envelope_db = np.interp(grid, np.arange(_ENVELOPE_CONTROL_POINTS, dtype=np.float64), control)
    envelope = 10.0 ** (envelope_db / 20.0)
    # Keep the carrier comfortably below Nyquist even for low-rate corpora.
    freq = rng.uniform(_CARRIER_HZ_RANGE[0], min(_CARRIER_HZ_RANGE[1], 0.45 * spec.sample_rate))
    phase = rng.uniform(0.0, 2.0 * np.pi)
    t = np.arange(n, dtype=np.float64) / spec.sample_rate
    samples = envelope * np.sin(2.0 * np.pi * freq * t + phase)
    return Waveform(samples, spec.sample_rate)


def _make_segment(spec: SyntheticCorpusSpec, label: str, index: int) -> Segment:
    class_code = 0 if label == LABEL_GENUINE else 1
    rng = substream(spec.seed, "corpus", class_code, index)
    base_range = spec.dyn_range_db_genuine + rng.uniform(
        0.0, spec.dyn_range_db_genuine_spread
    )
    if label == LABEL_GENUINE:
        velocity_scale = 1.0
        jitter_sigma = spec.segment_scale_jitter
        range_db = base_range
    else:
        velocity_scale = spec.velocity_scale_fake
        jitter_sigma = spec.fake_scale_jitter
        # Synthesis compresses whatever the underlying recording had.
        drop = rng.uniform(spec.fake_dyn_drop_min, spec.fake_dyn_drop_max)
        range_db = max(base_range - drop, 1.0)
    embedding = _synth_embedding(rng, spec, velocity_scale, jitter_sigma)
    waveform = _synth_waveform(rng, spec, range_db)
    prefix = "gen" if label == LABEL_GENUINE else "fake"
    return Segment(waveform, embedding, label, f"{prefix}-{index:05d}")


def generate_synthetic(spec: SyntheticCorpusSpec) -> list[Segment]:
    """Draw the corpus. Fully determined by ``spec``, segment order is fixed."""
    segments = [_make_segment(spec, LABEL_GENUINE, i) for i in range(spec.n_genuine)]
    segments += [_make_segment(spec, LABEL_DEEPFAKE, i) for i in range(spec.n_fake)]
    return segments
