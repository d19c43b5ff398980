"""Detection metrics over genuine/fake score sets.

Scores follow one orientation everywhere in this package: higher means
more genuine. A trial is accepted (called genuine) when its score is at or
above the threshold, so the false-acceptance rate is measured on fake
scores and the false-rejection rate on genuine ones.

The threshold sweep is the exact one: midpoints between consecutive
distinct scores plus one sentinel below and one above everything. Rates
only change at observed scores, so this sweep visits every achievable
operating point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadCosts, EmptyClass
from .validation import as_float_vector


@dataclass(frozen=True, eq=False)
class ScoreSet:
    """Genuine and fake detection scores, each class non-empty."""

    genuine: np.ndarray
    fake: np.ndarray

    def __post_init__(self) -> None:
        g = as_float_vector(self.genuine, "genuine scores")
        f = as_float_vector(self.fake, "fake scores")
        if g.size == 0 or f.size == 0:
            raise EmptyClass("both score classes must be non-empty")
        object.__setattr__(self, "genuine", g)
        object.__setattr__(self, "fake", f)


def _threshold_sweep(scores: ScoreSet) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Thresholds with FAR/FRR at each; FAR falls and FRR rises along the sweep."""
    pooled = np.unique(np.concatenate([scores.genuine, scores.fake]))
    inner = (pooled[:-1] + pooled[1:]) / 2.0 if pooled.size > 1 else np.empty(0)
    thresholds = np.concatenate([[pooled[0] - 1.0], inner, [pooled[-1] + 1.0]])
    genuine_sorted = np.sort(scores.genuine)
    fake_sorted = np.sort(scores.fake)
    # accept iff score >= threshold
    far = 1.0 - np.searchsorted(fake_sorted, thresholds, side="left") / fake_sorted.size
    frr = np.searchsorted(genuine_sorted, thresholds, side="left") / genuine_sorted.size
    return thresholds, far, frr


def eer(scores: ScoreSet) -> tuple[float, float]:
    """Equal error rate and its threshold.

    FAR - FRR starts at +1 and ends at -1 over the sweep; the crossing is
    found and linearly interpolated between the two adjacent operating
    points, which also interpolates the threshold.
    """
    thresholds, far, frr = _threshold_sweep(scores)
    diff = far - frr
    j = int(np.argmax(diff <= 0.0))
    if diff[j] == 0.0:
        return float(far[j]), float(thresholds[j])
    a1 = diff[j - 1]
    a2 = -diff[j]
    w = a1 / (a1 + a2)
    value = (1.0 - w) * far[j - 1] + w * far[j]
    threshold = (1.0 - w) * thresholds[j - 1] + w * thresholds[j]
    return float(value), float(threshold)


def roc_auc(scores: ScoreSet) -> float:
    """Probability a genuine score exceeds a fake one, ties counted half."""
    fake_sorted = np.sort(scores.fake)
    below = np.searchsorted(fake_sorted, scores.genuine, side="left")
    below_or_equal = np.searchsorted(fake_sorted, scores.genuine, side="right")
    wins = below + 0.5 * (below_or_equal - below)
    return float(np.sum(wins) / (scores.genuine.size * scores.fake.size))


@dataclass(frozen=True)
class TdcfCosts:
    """Tandem detection-cost parameters.

    Priors cover target speakers, zero-effort nontargets, and spoofs and
    must sum to 1. Each stage has its own miss/false-alarm cost. The
    verification stage is summarized by a fixed operating point
    (asv_p_miss, asv_p_fa, asv_p_fa_spoof); the default is an ideal
    verifier that never errs on bona fide speech and always accepts a
    spoof that slips past the countermeasure, which reduces the cost to
    the two countermeasure terms.
    """

    pi_target: float = 0.9405
    pi_nontarget: float = 0.0095
    pi_spoof: float = 0.05
    cm_miss_cost: float = 1.0
    cm_fa_cost: float = 10.0
    asv_miss_cost: float = 1.0
    asv_fa_cost: float = 10.0
    asv_p_miss: float = 0.0
    asv_p_fa: float = 0.0
    asv_p_fa_spoof: float = 1.0

    def __post_init__(self) -> None:
        priors = (self.pi_target, self.pi_nontarget, self.pi_spoof)
        if any(p < 0.0 for p in priors):
            raise BadCosts("priors must be non-negative")
        if abs(sum(priors) - 1.0) > 1e-9:
            raise BadCosts(f"priors must sum to 1, got {sum(priors)!r}")
        costs = (self.cm_miss_cost, self.cm_fa_cost, self.asv_miss_cost, self.asv_fa_cost)
        if any(c <= 0.0 for c in costs):
            raise BadCosts("all costs must be positive")
        rates = (self.asv_p_miss, self.asv_p_fa, self.asv_p_fa_spoof)
        if any(not 0.0 <= r <= 1.0 for r in rates):
            raise BadCosts("verifier operating rates must lie in [0, 1]")
        if self.pi_target == 0.0 or self.pi_spoof == 0.0:
            raise BadCosts("target and spoof priors must be positive")


def _tdcf_curve(far: np.ndarray, frr: np.ndarray, costs: TdcfCosts) -> np.ndarray:
    pass_rate = 1.0 - frr  # bona fide trials the countermeasure lets through
    return (
        costs.pi_target * costs.cm_miss_cost * frr
        + costs.pi_target * costs.asv_miss_cost * pass_rate * costs.asv_p_miss
        + costs.pi_nontarget * costs.asv_fa_cost * pass_rate * costs.asv_p_fa
        + costs.pi_spoof * costs.cm_fa_cost * far * costs.asv_p_fa_spoof
    )


def min_tdcf(scores: ScoreSet, costs: TdcfCosts = TdcfCosts()) -> float:
    """Minimum normalized tandem detection cost over the threshold sweep.

    Normalization divides by the cost of the better of the two degenerate
    countermeasures (accept everything or reject everything), so the value
    lies in [0, 1] and a perfectly separating score set reaches 0 under
    the default ideal-verifier operating point.
    """
    _, far, frr = _threshold_sweep(scores)
    curve = _tdcf_curve(far, frr, costs)
    # Sentinel endpoints of the sweep are exactly the degenerate systems.
    default = min(curve[0], curve[-1])
    if default <= 0.0:
        raise BadCosts("degenerate systems have zero cost; normalization undefined")
    return float(np.min(curve) / default)


def ks_distance(a, b) -> float:
    """Exact two-sample Kolmogorov-Smirnov statistic."""
    a = as_float_vector(np.asarray(a), "a")
    b = as_float_vector(np.asarray(b), "b")
    if a.size == 0 or b.size == 0:
        raise EmptyClass("KS distance needs non-empty samples on both sides")
    a_sorted = np.sort(a)
    b_sorted = np.sort(b)
    grid = np.union1d(a_sorted, b_sorted)
    ecdf_a = np.searchsorted(a_sorted, grid, side="right") / a.size
    ecdf_b = np.searchsorted(b_sorted, grid, side="right") / b.size
    return float(np.max(np.abs(ecdf_a - ecdf_b)))


@dataclass(frozen=True, eq=False)
class EcdfTable:
    """Both empirical CDFs on the merged support, with the KS gap located."""

    values: np.ndarray
    ecdf_a: np.ndarray
    ecdf_b: np.ndarray
    ks_index: int

    @property
    def ks_distance(self) -> float:
        return float(abs(self.ecdf_a[self.ks_index] - self.ecdf_b[self.ks_index]))


def ecdf_table(a, b) -> EcdfTable:
    a = as_float_vector(np.asarray(a), "a")
    b = as_float_vector(np.asarray(b), "b")
    if a.size == 0 or b.size == 0:
        raise EmptyClass("ECDF table needs non-empty samples on both sides")
    a_sorted = np.sort(a)
    b_sorted = np.sort(b)
    grid = np.union1d(a_sorted, b_sorted)
    ecdf_a = np.searchsorted(a_sorted, grid, side="right") / a.size
    ecdf_b = np.searchsorted(b_sorted, grid, side="right") / b.size
    ks_index = int(np.argmax(np.abs(ecdf_a - ecdf_b)))
    return EcdfTable(grid, ecdf_a, ecdf_b, ks_index)


@dataclass(frozen=True)
class MetricReport:
    eer: float
    eer_threshold: float
    roc_auc: float
    min_tdcf: float
    n_genuine: int
    n_fake: int


def compute_metric_report(scores: ScoreSet, costs: TdcfCosts = TdcfCosts()) -> MetricReport:
    eer_value, threshold = eer(scores)
    return MetricReport(
        eer=eer_value,
        eer_threshold=threshold,
        roc_auc=roc_auc(scores),
        min_tdcf=min_tdcf(scores, costs),
        n_genuine=int(scores.genuine.size),
        n_fake=int(scores.fake.size),
    )
