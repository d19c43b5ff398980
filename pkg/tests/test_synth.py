"""Synthetic corpus generator: determinism, shapes, and class statistics."""

import numpy as np
import pytest

from physvoice.errors import ScenarioError
from physvoice.metrics import ks_distance
from physvoice.signals import LABEL_DEEPFAKE, LABEL_GENUINE
from physvoice.synth import SyntheticCorpusSpec, generate_synthetic

SMALL = dict(dims=4, length=60, sample_rate=2000)


def naive_mean_speed(frames: np.ndarray, frame_rate: float) -> float:
    """Plain-loop mean velocity magnitude, independent of the feature code."""
    total = 0.0
    for i in range(frames.shape[0] - 1):
        step = (frames[i + 1] - frames[i]) * frame_rate
        total += float(np.sqrt(np.sum(step * step)))
    return total / (frames.shape[0] - 1)


class TestSpecValidation:
    def test_counts_must_be_positive(self):
        with pytest.raises(ScenarioError):
            SyntheticCorpusSpec(0, 10)
        with pytest.raises(ScenarioError):
            SyntheticCorpusSpec(10, 0)

    @pytest.mark.parametrize(
        "kwargs",
        [
            dict(dims=0),
            dict(length=2),
            dict(frame_rate=0.0),
            dict(sample_rate=0),
            dict(velocity_scale_fake=0.0),
            dict(velocity_scale_fake=1.5),
            dict(smoothness=0.0),
            dict(smoothness=1.2),
            dict(segment_scale_jitter=-0.1),
            dict(fake_scale_jitter=-0.1),
            dict(start_scale=-1.0),
            dict(dyn_range_db_genuine=0.0),
            dict(dyn_range_db_genuine_spread=-1.0),
            dict(fake_dyn_drop_min=5.0, fake_dyn_drop_max=2.0),
        ],
    )
    def test_bad_parameters(self, kwargs):
        with pytest.raises(ScenarioError):
            SyntheticCorpusSpec(10, 10, **kwargs)


class TestGeneration:
    def test_counts_labels_and_unique_ids(self):
        spec = SyntheticCorpusSpec(7, 5, seed=1, **SMALL)
        segments = generate_synthetic(spec)
        assert len(segments) == 12
        assert sum(s.label == LABEL_GENUINE for s in segments) == 7
        assert sum(s.label == LABEL_DEEPFAKE for s in segments) == 5
        ids = [s.source_id for s in segments]
        assert len(set(ids)) == len(ids)

    def test_segment_shapes(self):
        spec = SyntheticCorpusSpec(2, 2, seed=0, **SMALL)
        for seg in generate_synthetic(spec):
            assert seg.embedding.frames.shape == (60, 4)
            assert seg.embedding.frame_rate == 50.0
            assert seg.waveform.sample_rate == 2000
            assert seg.waveform.samples.shape[0] == 3 * 2000

    def test_deterministic_given_seed(self):
        spec = SyntheticCorpusSpec(4, 4, seed=9, **SMALL)
        a = generate_synthetic(spec)
        b = generate_synthetic(spec)
        for sa, sb in zip(a, b):
            assert np.array_equal(sa.embedding.frames, sb.embedding.frames)
            assert np.array_equal(sa.waveform.samples, sb.waveform.samples)

    def test_seed_changes_output(self):
        base = generate_synthetic(SyntheticCorpusSpec(2, 2, seed=0, **SMALL))
        other = generate_synthetic(SyntheticCorpusSpec(2, 2, seed=1, **SMALL))
        assert not np.array_equal(base[0].embedding.frames, other[0].embedding.frames)

    def test_segment_draws_are_index_stable(self):
        # Growing the corpus must not disturb earlier segments; each one
        # draws from its own named stream.
        small = generate_synthetic(SyntheticCorpusSpec(3, 3, seed=5, **SMALL))
        big = generate_synthetic(SyntheticCorpusSpec(5, 5, seed=5, **SMALL))
        assert np.array_equal(small[0].embedding.frames, big[0].embedding.frames)
        small_fake = [s for s in small if s.label == LABEL_DEEPFAKE][0]
        big_fake = [s for s in big if s.label == LABEL_DEEPFAKE][0]
        assert np.array_equal(small_fake.embedding.frames, big_fake.embedding.frames)


class TestClassStatistics:
    def test_equal_scale_classes_are_indistinguishable(self):
        # With the velocity scale at 1 and matched jitters the two classes
        # are draws from one distribution, so the KS statistic stays small.
        spec = SyntheticCorpusSpec(
            200,
            200,
            seed=0,
            velocity_scale_fake=1.0,
            fake_scale_jitter=0.25,
            fake_dyn_drop_min=0.0,
            fake_dyn_drop_max=0.0,
            **SMALL,
        )
        segments = generate_synthetic(spec)
        speeds = {
            LABEL_GENUINE: [],
            LABEL_DEEPFAKE: [],
        }
        for seg in segments:
            speeds[seg.label].append(
                naive_mean_speed(seg.embedding.frames, seg.embedding.frame_rate)
            )
        assert ks_distance(speeds[LABEL_GENUINE], speeds[LABEL_DEEPFAKE]) < 0.1

    def test_velocity_ratio_tracks_scale(self):
        spec = SyntheticCorpusSpec(500, 500, seed=0)
        segments = generate_synthetic(spec)
        genuine = [
            naive_mean_speed(s.embedding.frames, s.embedding.frame_rate)
            for s in segments
            if s.label == LABEL_GENUINE
        ]
        fake = [
            naive_mean_speed(s.embedding.frames, s.embedding.frame_rate)
            for s in segments
            if s.label == LABEL_DEEPFAKE
        ]
        ratio = np.mean(fake) / np.mean(genuine)
        assert abs(ratio - spec.velocity_scale_fake) / spec.velocity_scale_fake < 0.05

    def test_fake_dynamic_range_compressed(self):
        segments = generate_synthetic(SyntheticCorpusSpec(60, 60, seed=2, **SMALL))
        ranges = {LABEL_GENUINE: [], LABEL_DEEPFAKE: []}
        for seg in segments:
            mag = np.abs(seg.waveform.samples)
            quiet = max(float(np.percentile(mag, 10.0)), 1e-8)
            ranges[seg.label].append(20.0 * np.log10(float(np.max(mag)) / quiet))
        assert np.mean(ranges[LABEL_DEEPFAKE]) < np.mean(ranges[LABEL_GENUINE])

    def test_smoothness_one_allowed(self):
        segments = generate_synthetic(
            SyntheticCorpusSpec(2, 2, seed=0, smoothness=1.0, **SMALL)
        )
        assert len(segments) == 4
