"""End-to-end orchestration shared by the command-line driver and tests.

The full detection pipeline is: corpus -> physics features + pooled
embeddings -> orthogonal fusion (fitted on the training split only) ->
dropout MLP head -> Monte-Carlo predictions and metrics on the held-out
split. Every stage is also reachable on its own through the file formats
in :mod:`physvoice.fileio`.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifier import (
    DropoutMlpClassifier,
    McPredictive,
    TrainConfig,
    expected_calibration_error,
    uncertainty_summary,
)
from .errors import DegenerateLabels, FormatError, PhysvoiceError
from .features import PhysicsVector, physics_vector
from .fileio import ManifestEntry, read_embedding, read_embedding_csv, read_manifest, read_wav
from .fusion import OrthogonalFusion, pool_embedding
from .metrics import (
    MetricReport,
    ScoreSet,
    TdcfCosts,
    compute_metric_report,
    ecdf_table,
    EcdfTable,
)
from .rngutil import substream
from .signals import (
    LABEL_DEEPFAKE,
    LABEL_GENUINE,
    Segment,
    label_to_int,
    preprocess,
)
from .synth import SyntheticCorpusSpec, generate_synthetic


@dataclass(frozen=True, eq=False)
class FeatureRow:
    source_id: str
    label: str
    vector: PhysicsVector


def _load_entry(entry: ManifestEntry, base_dir: Path) -> list[Segment]:
    """Segments for one manifest row.

    The waveform is preprocessed (resampled, windowed, normalized); the
    embedding file must then hold exactly 3 s of frames per window, which
    are sliced out window by window. Multi-window sources get a window
    suffix on their id so ids stay unique.
    """
    wav = read_wav(base_dir / entry.wav_path)
    emb_path = base_dir / entry.emb_path
    if emb_path.suffix == ".csv":
        seq = read_embedding_csv(emb_path)
    else:
        seq = read_embedding(emb_path)
    windows = preprocess(wav)
    if not windows:
        raise FormatError(f"{entry.source_id}: audio shorter than one 3-second window")
    frames_per_window = int(round(3 * seq.frame_rate))
    if seq.n_frames != frames_per_window * len(windows):
        raise FormatError(
            f"{entry.source_id}: embedding holds {seq.n_frames} frames, "
            f"expected {frames_per_window} per window for {len(windows)} windows"
        )
    segments = []
    for w, window in enumerate(windows):
        frames = seq.frames[w * frames_per_window : (w + 1) * frames_per_window]
        source_id = entry.source_id if len(windows) == 1 else f"{entry.source_id}#w{w:02d}"
        segments.append(
            Segment(window, type(seq)(frames, seq.frame_rate), entry.label, source_id)
        )
    return segments


def load_corpus_from_manifest(
    manifest_path, jobs: int = 1
) -> tuple[list[Segment], list[str]]:
    """Load every readable manifest entry; unreadable ones become error strings."""
    manifest_path = Path(manifest_path)
    entries = read_manifest(manifest_path)
    base_dir = manifest_path.parent
    segments: list[Segment] = []
    errors: list[str] = []

    def work(entry: ManifestEntry):
        try:
            return entry, _load_entry(entry, base_dir), None
        except (PhysvoiceError, OSError) as exc:
            return entry, None, f"{entry.source_id}: {exc}"

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(work, entries))
    else:
        results = [work(e) for e in entries]
    for _, segs, error in results:
        if error is not None:
            errors.append(error)
        else:
            segments.extend(segs)
    segments.sort(key=lambda s: s.source_id)
    return segments, errors


def extract_feature_rows(segments: list[Segment], jobs: int = 1) -> list[FeatureRow]:
    """Physics vectors for every segment, sorted by source id."""

    def work(seg: Segment) -> FeatureRow:
        return FeatureRow(seg.source_id, seg.label, physics_vector(seg))

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(work, segments))
    else:
        rows = [work(s) for s in segments]
    rows.sort(key=lambda r: r.source_id)
    return rows


def build_design_matrix(segments: list[Segment]) -> tuple[list[str], list[str], np.ndarray]:
    """Concatenate pooled embeddings with physics features, one row per segment."""
    ids = [s.source_id for s in segments]
    labels = [s.label for s in segments]
    pooled = np.vstack([pool_embedding(s.embedding) for s in segments])
    physics = np.vstack([physics_vector(s).as_array() for s in segments])
    return ids, labels, np.hstack([pooled, physics])


def stratified_split(
    labels: list[str], train_fraction: float, seed: int
) -> tuple[np.ndarray, np.ndarray]:
    """Index split keeping the class mix; both splits keep both classes."""
    if not 0.0 < train_fraction < 1.0:
        raise ValueError("train_fraction must lie strictly between 0 and 1")
    y = np.array([label_to_int(l) for l in labels])
    rng = substream(seed, "split")
    train_parts = []
    eval_parts = []
    for cls in (0, 1):
        idx = rng.permutation(np.flatnonzero(y == cls))
        if idx.size < 2:
            raise DegenerateLabels(f"class {cls} has fewer than 2 segments")
        n_train = int(round(idx.size * train_fraction))
        n_train = min(max(n_train, 1), idx.size - 1)
        train_parts.append(idx[:n_train])
        eval_parts.append(idx[n_train:])
    return np.sort(np.concatenate(train_parts)), np.sort(np.concatenate(eval_parts))


@dataclass(frozen=True, eq=False)
class DetectionArtifacts:
    """Everything the end-to-end pipeline produces in memory."""

    feature_rows: list[FeatureRow]
    fusion: OrthogonalFusion
    model: DropoutMlpClassifier
    eval_ids: list[str]
    eval_labels: list[str]
    predictions: list[McPredictive]
    report: MetricReport
    ece: float
    uncertainty: object
    ecdf_tables: dict[str, EcdfTable]


ECDF_FEATURES = {"mean_vel_mag": 4, "tf_variation": 5}


def run_detection_pipeline(
    segments: list[Segment],
    train_config: TrainConfig,
    n_mc: int = 50,
    train_fraction: float = 0.7,
    costs: TdcfCosts = TdcfCosts(),
    jobs: int = 1,
    hidden1: int = 64,
    hidden2: int = 32,
) -> DetectionArtifacts:
    """Fit on the training split, evaluate on the rest.

    The fusion transform is fitted on training rows only and then frozen;
    the classifier trains on the fused training rows; Monte-Carlo
    predictions, detection metrics, calibration, and the per-class
    uncertainty summary all come from the held-out rows. The ECDF tables
    compare genuine vs fake over the full corpus for the two headline
    physics features.
    """
    rows = extract_feature_rows(segments, jobs=jobs)
    by_id = {s.source_id: s for s in segments}
    ordered = [by_id[r.source_id] for r in rows]
    ids, labels, x_raw = build_design_matrix(ordered)
    y = np.array([label_to_int(l) for l in labels])

    train_idx, eval_idx = stratified_split(labels, train_fraction, train_config.seed)
    fusion = OrthogonalFusion().fit(x_raw[train_idx])
    fused = fusion.transform(x_raw)

    model = DropoutMlpClassifier.from_config(train_config, hidden1, hidden2)
    model.fit(fused[train_idx], y[train_idx])

    preds = model.mc_predict_batch(fused[eval_idx], n_mc, seed=train_config.seed)
    scores = np.array([p.p_genuine for p in preds])
    eval_y = y[eval_idx]
    report = compute_metric_report(
        ScoreSet(scores[eval_y == 1], scores[eval_y == 0]), costs
    )
    ece = expected_calibration_error(preds, eval_y)
    summary = uncertainty_summary(preds, eval_y)

    physics = np.vstack([r.vector.as_array() for r in rows])
    row_y = np.array([label_to_int(r.label) for r in rows])
    tables = {
        name: ecdf_table(physics[row_y == 1, col], physics[row_y == 0, col])
        for name, col in ECDF_FEATURES.items()
    }
    return DetectionArtifacts(
        feature_rows=rows,
        fusion=fusion,
        model=model,
        eval_ids=[ids[i] for i in eval_idx],
        eval_labels=[labels[i] for i in eval_idx],
        predictions=preds,
        report=report,
        ece=ece,
        uncertainty=summary,
        ecdf_tables=tables,
    )


def synthetic_corpus(spec: SyntheticCorpusSpec) -> list[Segment]:
    return generate_synthetic(spec)


def corpus_class_counts(segments: list[Segment]) -> tuple[int, int]:
    genuine = sum(1 for s in segments if s.label == LABEL_GENUINE)
    fake = sum(1 for s in segments if s.label == LABEL_DEEPFAKE)
    return genuine, fake
