"""Physics features against hand values and brute-force oracles.

Every oracle below recomputes its feature from the mathematical definition
with the dumbest correct algorithm (literal DFT sums, sorted-array
percentile interpolation, python-loop finite differences, np.cross in
three dimensions). The fast implementations must agree to 1e-9 relative.
"""

import numpy as np
import pytest

from physvoice.errors import SequenceTooShort
from physvoice.features import (
    ALPHA_VIBRATIONAL,
    BETA_ROTATIONAL,
    N_PHYSICS_FEATURES,
    PhysicsFeatureExtractor,
    PhysicsVector,
    dynamic_range_db,
    hann_window,
    kinematics,
    mean_velocity_magnitude,
    physics_vector,
    rotational_shift,
    temporal_frequency_variation,
    translational_shift,
    vibrational_shift,
)
from physvoice.signals import EmbeddingSequence, Segment, Waveform


def rel_close(a: float, b: float, tol: float = 1e-9) -> bool:
    return abs(a - b) <= tol * max(1.0, abs(a), abs(b))


# -- oracles -------------------------------------------------------------------


def oracle_kinematics(frames: np.ndarray, frame_rate: float):
    dt = 1.0 / frame_rate
    t, d = frames.shape
    v = np.empty((t - 1, d))
    for i in range(t - 1):
        for j in range(d):
            v[i, j] = (frames[i + 1, j] - frames[i, j]) / dt
    a = np.empty((t - 2, d))
    for i in range(t - 2):
        for j in range(d):
            a[i, j] = (v[i + 1, j] - v[i, j]) / dt
    return v, a


def oracle_vibrational(frames: np.ndarray, alpha: float) -> float:
    t, d = frames.shape
    w = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(t) / t)
    peak_bins = []
    for j in range(d):
        x = frames[:, j] * w
        best_k, best_p = 1, -1.0
        for k in range(1, t // 2 + 1):
            acc = 0.0 + 0.0j
            for n in range(t):
                acc += x[n] * np.exp(-2.0j * np.pi * k * n / t)
            power = abs(acc) ** 2
            if power > best_p:
                best_k, best_p = k, power
        peak_bins.append(best_k)
    bins = np.array(peak_bins, dtype=np.float64)
    return float(alpha * np.sqrt(np.mean((bins - np.mean(bins)) ** 2)))


def oracle_percentile_10(values: np.ndarray) -> float:
    s = np.sort(values)
    rank = 0.10 * (s.size - 1)
    lo = int(np.floor(rank))
    frac = rank - lo
    if lo + 1 >= s.size:
        return float(s[-1])
    return float(s[lo] * (1.0 - frac) + s[lo + 1] * frac)


def oracle_dynamic_range(samples: np.ndarray) -> float:
    mag = np.abs(samples)
    peak = float(np.max(mag))
    if peak == 0.0:
        return 0.0
    return 20.0 * np.log10(peak / max(oracle_percentile_10(mag), 1e-8))


def oracle_rotational_3d(frames: np.ndarray, frame_rate: float, beta: float) -> float:
    v, _ = oracle_kinematics(frames, frame_rate)
    areas = []
    for i in range(v.shape[0] - 1):
        areas.append(float(np.linalg.norm(np.cross(v[i], v[i + 1] - v[i]))))
    return float(beta * np.mean(areas))


# -- hand-computed values --------------------------------------------------------


def test_kinematics_hand_case():
    seq = EmbeddingSequence(np.array([[0.0], [1.0], [3.0]]), 50.0)
    kin = kinematics(seq)
    assert np.array_equal(kin.velocities, np.array([[50.0], [100.0]]))
    assert np.array_equal(kin.accelerations, np.array([[2500.0]]))
    # mean speed 75, mean |a| 2500 -> 75 + 1250
    assert translational_shift(kin) == pytest.approx(1325.0)
    assert mean_velocity_magnitude(kin) == pytest.approx(75.0)


def test_vibrational_hand_case():
    t = np.arange(64)
    frames = np.stack(
        [np.sin(2 * np.pi * 4 * t / 64), np.sin(2 * np.pi * 12 * t / 64)], axis=1
    )
    seq = EmbeddingSequence(frames, 50.0)
    # Peak bins 4 and 12; population std of {4, 12} is 4.
    assert vibrational_shift(seq) == pytest.approx(0.04)


def test_constant_segment_is_all_zero():
    wave = Waveform(np.full(3 * 2000, 0.25), 2000)
    emb = EmbeddingSequence(np.full((40, 5), 1.7), 50.0)
    vec = physics_vector(Segment(wave, emb, "genuine", "const"))
    assert vec.translational_shift == 0.0
    assert vec.vibrational_shift == 0.0
    assert vec.rotational_shift == 0.0
    assert vec.dynamic_range_db == 0.0
    assert vec.mean_velocity_magnitude == 0.0
    assert vec.temporal_frequency_variation == 0.0
    assert np.array_equal(vec.as_array(), np.zeros(N_PHYSICS_FEATURES))


def test_zero_waveform_dynamic_range():
    assert dynamic_range_db(Waveform(np.zeros(100), 100)) == 0.0


def test_hann_window_endpoints():
    w = hann_window(8)
    assert w[0] == 0.0
    assert w.shape == (8,)
    # The periodic form has no trailing zero; w[4] is the peak.
    assert w[4] == pytest.approx(1.0)


# -- oracle property loops --------------------------------------------------------


def test_kinematics_matches_loop_oracle():
    rng = np.random.default_rng(101)
    for _ in range(120):
        t = int(rng.integers(3, 24))
        d = int(rng.integers(1, 7))
        rate = float(rng.uniform(10.0, 100.0))
        frames = rng.standard_normal((t, d)) * rng.uniform(0.1, 5.0)
        kin = kinematics(EmbeddingSequence(frames, rate))
        v, a = oracle_kinematics(frames, rate)
        assert np.max(np.abs(kin.velocities - v)) <= 1e-9 * max(1.0, np.max(np.abs(v)))
        assert np.max(np.abs(kin.accelerations - a)) <= 1e-9 * max(1.0, np.max(np.abs(a)))


def test_vibrational_matches_naive_dft():
    rng = np.random.default_rng(102)
    for _ in range(80):
        t = int(rng.integers(4, 28))
        d = int(rng.integers(1, 6))
        frames = rng.standard_normal((t, d))
        seq = EmbeddingSequence(frames, 50.0)
        assert rel_close(vibrational_shift(seq), oracle_vibrational(frames, ALPHA_VIBRATIONAL))


def test_dynamic_range_matches_full_sort():
    rng = np.random.default_rng(103)
    for _ in range(200):
        n = int(rng.integers(5, 400))
        samples = rng.standard_normal(n) * rng.uniform(1e-4, 10.0)
        wave = Waveform(samples, 1000)
        assert rel_close(dynamic_range_db(wave), oracle_dynamic_range(samples))


def test_rotational_matches_literal_cross_product():
    rng = np.random.default_rng(104)
    for _ in range(150):
        t = int(rng.integers(4, 20))
        frames = rng.standard_normal((t, 3)) * rng.uniform(0.1, 3.0)
        kin = kinematics(EmbeddingSequence(frames, 50.0))
        got = rotational_shift(kin)
        want = oracle_rotational_3d(frames, 50.0, BETA_ROTATIONAL)
        assert rel_close(got, want)


def test_rotational_collinear_is_zero():
    # A straight-line trajectory spans no area regardless of dimension.
    direction = np.array([1.0, -2.0, 0.5, 3.0])
    steps = np.array([0.0, 1.0, 3.0, 3.5, 7.0])
    frames = steps[:, None] * direction[None, :]
    kin = kinematics(EmbeddingSequence(frames, 50.0))
    assert rotational_shift(kin) == pytest.approx(0.0, abs=1e-9)


def test_flux_variation_hand_case():
    # Fluxes are |1| and |3|: mean 2, population std 1, ratio 0.5.
    frames = np.array([[0.0], [1.0], [4.0]])
    seq = EmbeddingSequence(frames, 50.0)
    assert temporal_frequency_variation(seq) == pytest.approx(0.5)


# -- invariances ------------------------------------------------------------------


def test_scale_equivariance():
    rng = np.random.default_rng(105)
    frames = rng.standard_normal((30, 4))
    seq = EmbeddingSequence(frames, 50.0)
    scaled = EmbeddingSequence(3.0 * frames, 50.0)
    kin, kin3 = kinematics(seq), kinematics(scaled)
    assert translational_shift(kin3) == pytest.approx(3.0 * translational_shift(kin))
    assert mean_velocity_magnitude(kin3) == pytest.approx(3.0 * mean_velocity_magnitude(kin))
    # Parallelogram areas are quadratic in the scale.
    assert rotational_shift(kin3) == pytest.approx(9.0 * rotational_shift(kin))
    # Peak-bin location and flux variation ignore the scale entirely.
    assert vibrational_shift(scaled) == pytest.approx(vibrational_shift(seq))
    assert temporal_frequency_variation(scaled) == pytest.approx(
        temporal_frequency_variation(seq)
    )


def test_dynamic_range_scale_invariant():
    rng = np.random.default_rng(106)
    samples = rng.standard_normal(500)
    a = dynamic_range_db(Waveform(samples, 1000))
    b = dynamic_range_db(Waveform(10.0 * samples, 1000))
    assert a == pytest.approx(b, rel=1e-12)


# -- error paths ---------------------------------------------------------------


def test_sequence_length_requirements():
    three = EmbeddingSequence(np.random.default_rng(0).standard_normal((3, 2)), 50.0)
    kin = kinematics(three)
    with pytest.raises(SequenceTooShort):
        rotational_shift(kin)  # needs three velocities
    with pytest.raises(SequenceTooShort):
        vibrational_shift(three)  # needs four frames


def test_extractor_interface():
    rng = np.random.default_rng(107)
    segments = []
    for i in range(3):
        wave = Waveform(rng.standard_normal(3 * 2000), 2000)
        emb = EmbeddingSequence(rng.standard_normal((20, 3)), 50.0)
        segments.append(Segment(wave, emb, "genuine", f"s{i}"))
    extractor = PhysicsFeatureExtractor()
    matrix = extractor.fit(segments).transform(segments)
    assert matrix.shape == (3, N_PHYSICS_FEATURES)
    for row, seg in zip(matrix, segments):
        assert np.array_equal(row, physics_vector(seg).as_array())
    assert extractor.transform([]).shape == (0, N_PHYSICS_FEATURES)
    names = list(extractor.get_feature_names_out())
    assert names[0] == "translational_shift"
    assert len(names) == N_PHYSICS_FEATURES


def test_physics_vector_field_order():
    vec = PhysicsVector(1.0, 2.0, 3.0, 4.0, 5.0, 6.0)
    assert np.array_equal(vec.as_array(), np.array([1.0, 2.0, 3.0, 4.0, 5.0, 6.0]))
