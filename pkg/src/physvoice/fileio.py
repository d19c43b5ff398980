"""On-disk formats: WAV audio, embedding binaries, manifests, CSV and JSON artifacts.

All writers are deterministic byte-for-byte given the same inputs: floats
are serialized with repr (shortest round-trip form), JSON keys are sorted,
and rows are written in the order handed in. Files are written atomically
(temp file in the same directory, then rename).
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .classifier import McPredictive
from .errors import FormatError, ShapeError
from .features import PhysicsVector
from .metrics import EcdfTable, MetricReport
from .signals import LABELS, EmbeddingSequence, Waveform

_EMB_MAGIC = b"EMB1"

FEATURE_CSV_HEADER = (
    "source_id",
    "label",
    "delta_f_t",
    "delta_f_v",
    "delta_f_r",
    "r_dyn",
    "mean_vel_mag",
    "tf_variation",
)


def _atomic_write_bytes(path, blob: bytes) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(blob)
    os.replace(tmp, path)


def _atomic_write_text(path, text: str) -> None:
    _atomic_write_bytes(path, text.encode("utf-8"))


# -- WAV ---------------------------------------------------------------------
#
# Minimal RIFF/WAVE support: mono, PCM 16-bit (format 1) or IEEE float
# 32-bit (format 3). Unknown chunks are skipped; stereo is rejected.


def read_wav(path) -> Waveform:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 12 or blob[:4] != b"RIFF" or blob[8:12] != b"WAVE":
        raise FormatError(f"{path}: not a RIFF/WAVE file")
    offset = 12
    fmt = None
    data = None
    while offset + 8 <= len(blob):
        chunk_id = blob[offset : offset + 4]
        (chunk_size,) = struct.unpack_from("<I", blob, offset + 4)
        body = blob[offset + 8 : offset + 8 + chunk_size]
        if len(body) < chunk_size:
            raise FormatError(f"{path}: truncated {chunk_id!r} chunk")
        if chunk_id == b"fmt ":
            fmt = body
        elif chunk_id == b"data":
            data = body
        offset += 8 + chunk_size + (chunk_size & 1)
    if fmt is None or data is None:
        raise FormatError(f"{path}: missing fmt or data chunk")
    if len(fmt) < 16:
        raise FormatError(f"{path}: fmt chunk too short")
    audio_format, channels, sample_rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if channels != 1:
        raise FormatError(f"{path}: only mono audio is supported, found {channels} channels")
    if audio_format == 1 and bits == 16:
        samples = np.frombuffer(data, dtype="<i2").astype(np.float64) / 32768.0
    elif audio_format == 3 and bits == 32:
        samples = np.frombuffer(data, dtype="<f4").astype(np.float64)
    else:
        raise FormatError(
            f"{path}: unsupported encoding (format {audio_format}, {bits}-bit); "
            "expected PCM 16-bit or IEEE float 32-bit"
        )
    return Waveform(samples, sample_rate)


def write_wav(path, wave: Waveform, encoding: str = "float32") -> None:
    if encoding == "float32":
        payload = wave.samples.astype("<f4").tobytes()
        fmt_chunk = struct.pack(
            "<HHIIHH", 3, 1, wave.sample_rate, wave.sample_rate * 4, 4, 32
        )
        # IEEE-float WAV carries a fact chunk with the frame count.
        fact = b"fact" + struct.pack("<II", 4, wave.samples.shape[0])
    elif encoding == "pcm16":
        clipped = np.clip(wave.samples, -1.0, 1.0)
        payload = (clipped * 32767.0).round().astype("<i2").tobytes()
        fmt_chunk = struct.pack(
            "<HHIIHH", 1, 1, wave.sample_rate, wave.sample_rate * 2, 2, 16
        )
        fact = b""
    else:
        raise ValueError(f"unknown WAV encoding {encoding!r}")
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt_chunk)) + fmt_chunk
    body += fact
    body += b"data" + struct.pack("<I", len(payload)) + payload
    _atomic_write_bytes(path, b"RIFF" + struct.pack("<I", len(body)) + body)


# -- embedding binaries -------------------------------------------------------
#
# 16-byte header: magic, u32 frame count, u32 dimension, u32 frame rate in
# Hz; then frame-major little-endian float32.


def read_embedding(path) -> EmbeddingSequence:
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 16 or blob[:4] != _EMB_MAGIC:
        raise FormatError(f"{path}: not an embedding file")
    n_frames, dim, rate = struct.unpack_from("<III", blob, 4)
    expected = 16 + 4 * n_frames * dim
    if len(blob) != expected:
        raise FormatError(f"{path}: expected {expected} bytes, found {len(blob)}")
    if rate == 0:
        raise FormatError(f"{path}: frame rate must be positive")
    frames = (
        np.frombuffer(blob, dtype="<f4", count=n_frames * dim, offset=16)
        .astype(np.float64)
        .reshape(n_frames, dim)
    )
    return EmbeddingSequence(frames, float(rate))


def write_embedding(path, seq: EmbeddingSequence) -> None:
    rate = int(round(seq.frame_rate))
    if abs(rate - seq.frame_rate) > 1e-9:
        raise FormatError("embedding files hold integer frame rates only")
    header = _EMB_MAGIC + struct.pack("<III", seq.n_frames, seq.dim, rate)
    _atomic_write_bytes(path, header + np.ascontiguousarray(seq.frames, dtype="<f4").tobytes())


def read_embedding_csv(path, frame_rate: float = 50.0) -> EmbeddingSequence:
    """Plain CSV fallback: one frame per row, no header."""
    try:
        frames = np.loadtxt(path, delimiter=",", ndmin=2, dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return EmbeddingSequence(frames, frame_rate)


# -- corpus manifest ----------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    source_id: str
    label: str
    wav_path: str
    emb_path: str


def read_manifest(path) -> list[ManifestEntry]:
    """JSON-lines manifest; paths are taken relative to the manifest's directory."""
    entries = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            missing = {"source_id", "label", "wav_path", "emb_path"} - set(record)
            if missing:
                raise FormatError(f"{path}:{line_no}: missing fields {sorted(missing)}")
            if record["label"] not in LABELS:
                raise FormatError(f"{path}:{line_no}: unknown label {record['label']!r}")
            entries.append(
                ManifestEntry(
                    record["source_id"], record["label"], record["wav_path"], record["emb_path"]
                )
            )
    return entries


def write_manifest(path, entries: list[ManifestEntry]) -> None:
    lines = [
        json.dumps(
            {
                "source_id": e.source_id,
                "label": e.label,
                "wav_path": e.wav_path,
                "emb_path": e.emb_path,
            },
            sort_keys=True,
        )
        for e in entries
    ]
    _atomic_write_text(path, "".join(line + "\n" for line in lines))


# -- feature CSV ---------------------------------------------------------------


def write_feature_csv(path, rows: list[tuple[str, str, PhysicsVector]]) -> None:
    lines = [",".join(FEATURE_CSV_HEADER)]
    for source_id, label, vec in rows:
        values = [repr(float(v)) for v in vec.as_array()]
        lines.append(",".join([source_id, label] + values))
    _atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_feature_csv(path) -> tuple[list[str], list[str], np.ndarray]:
    """Returns (source_ids, labels, feature matrix)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines or tuple(lines[0].split(",")) != FEATURE_CSV_HEADER:
        raise FormatError(f"{path}: missing or wrong feature CSV header")
    ids: list[str] = []
    labels: list[str] = []
    values: list[list[float]] = []
    for line_no, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != len(FEATURE_CSV_HEADER):
            raise FormatError(f"{path}:{line_no}: expected {len(FEATURE_CSV_HEADER)} columns")
        ids.append(parts[0])
        labels.append(parts[1])
        try:
            values.append([float(v) for v in parts[2:]])
        except ValueError as exc:
            raise FormatError(f"{path}:{line_no}: {exc}") from exc
    matrix = np.array(values, dtype=np.float64) if values else np.empty((0, 6))
    return ids, labels, matrix


# -- fused feature CSV ----------------------------------------------------------


def write_fused_csv(path, source_ids: list[str], labels: list[str], matrix: np.ndarray) -> None:
    if matrix.ndim != 2 or matrix.shape[0] != len(source_ids) or len(labels) != len(source_ids):
        raise ShapeError("fused matrix and id/label lists must align")
    header = ["source_id", "label"] + [f"f{i}" for i in range(matrix.shape[1])]
    lines = [",".join(header)]
    for sid, label, row in zip(source_ids, labels, matrix):
        lines.append(",".join([sid, label] + [repr(float(v)) for v in row]))
    _atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_fused_csv(path) -> tuple[list[str], list[str], np.ndarray]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines or not lines[0].startswith("source_id,label,f0"):
        raise FormatError(f"{path}: missing fused CSV header")
    width = len(lines[0].split(",")) - 2
    ids: list[str] = []
    labels: list[str] = []
    values: list[list[float]] = []
    for line_no, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != width + 2:
            raise FormatError(f"{path}:{line_no}: expected {width + 2} columns")
        ids.append(parts[0])
        labels.append(parts[1])
        values.append([float(v) for v in parts[2:]])
    matrix = np.array(values, dtype=np.float64) if values else np.empty((0, width))
    return ids, labels, matrix


# -- predictions ----------------------------------------------------------------


def write_predictions_jsonl(
    path, source_ids: list[str], labels: list[str], preds: list[McPredictive]
) -> None:
    if not (len(source_ids) == len(labels) == len(preds)):
        raise ShapeError("prediction ids, labels, and predictives must align")
    lines = []
    for sid, label, pred in zip(source_ids, labels, preds):
        lines.append(
            json.dumps(
                {
                    "source_id": sid,
                    "label": label,
                    "p_genuine": pred.p_genuine,
                    "total_u": pred.total_u,
                    "aleatoric_u": pred.aleatoric_u,
                    "epistemic_u": pred.epistemic_u,
                },
                sort_keys=True,
            )
        )
    _atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_predictions_jsonl(path) -> list[dict]:
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise FormatError(f"{path}:{line_no}: invalid JSON: {exc}") from exc
            missing = {
                "source_id",
                "label",
                "p_genuine",
                "total_u",
                "aleatoric_u",
                "epistemic_u",
            } - set(record)
            if missing:
                raise FormatError(f"{path}:{line_no}: missing fields {sorted(missing)}")
            rows.append(record)
    return rows


# -- metric report and ECDF tables ------------------------------------------------


def write_metric_report(path, report: MetricReport) -> None:
    payload = {
        "eer": report.eer,
        "eer_threshold": report.eer_threshold,
        "roc_auc": report.roc_auc,
        "min_tdcf": report.min_tdcf,
        "n_genuine": report.n_genuine,
        "n_fake": report.n_fake,
    }
    _atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def read_metric_report(path) -> dict:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)


def write_ecdf_csv(path, table: EcdfTable, label_a: str = "a", label_b: str = "b") -> None:
    """One row per merged support point; the KS gap row is marked with 1."""
    lines = [f"value,ecdf_{label_a},ecdf_{label_b},is_ks_location"]
    for i, (v, ca, cb) in enumerate(zip(table.values, table.ecdf_a, table.ecdf_b)):
        lines.append(
            f"{float(v)!r},{float(ca)!r},{float(cb)!r},{1 if i == table.ks_index else 0}"
        )
    _atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_ecdf_csv(path) -> EcdfTable:
    with open(path, "r", encoding="utf-8") as fh:
        lines = [line.rstrip("\n") for line in fh if line.strip()]
    if not lines or not lines[0].startswith("value,ecdf_"):
        raise FormatError(f"{path}: missing ECDF header")
    values, ca, cb = [], [], []
    ks_index = -1
    for line_no, line in enumerate(lines[1:], start=2):
        parts = line.split(",")
        if len(parts) != 4:
            raise FormatError(f"{path}:{line_no}: expected 4 columns")
        values.append(float(parts[0]))
        ca.append(float(parts[1]))
        cb.append(float(parts[2]))
        if parts[3] == "1":
            ks_index = line_no - 2
    if ks_index < 0:
        raise FormatError(f"{path}: no KS location marked")
    return EcdfTable(np.array(values), np.array(ca), np.array(cb), ks_index)


def write_json(path, payload: dict) -> None:
    _atomic_write_text(path, json.dumps(payload, sort_keys=True, indent=2) + "\n")


def write_jsonl_records(path, records: list[dict]) -> None:
    """One sorted-key JSON object per line, written atomically."""
    _atomic_write_text(
        path, "".join(json.dumps(record, sort_keys=True) + "\n" for record in records)
    )
