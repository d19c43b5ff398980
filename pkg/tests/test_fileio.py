"""Round trips and rejection paths for every on-disk format."""

import json

import numpy as np
import pytest

from physvoice.errors import FormatError, ShapeError
from physvoice.fileio import (
    FEATURE_CSV_HEADER,
    ManifestEntry,
    read_ecdf_csv,
    read_embedding,
    read_embedding_csv,
    read_feature_csv,
    read_fused_csv,
    read_manifest,
    read_metric_report,
    read_predictions_jsonl,
    read_wav,
    write_ecdf_csv,
    write_embedding,
    write_feature_csv,
    write_fused_csv,
    write_manifest,
    write_metric_report,
    write_predictions_jsonl,
    write_wav,
)
from physvoice.classifier import McPredictive
from physvoice.features import PhysicsVector
from physvoice.metrics import MetricReport, ecdf_table
from physvoice.signals import EmbeddingSequence, Waveform


@pytest.fixture
def rng():
    return np.random.default_rng(80)


class TestWav:
    def test_float32_roundtrip(self, tmp_path, rng):
        wave = Waveform(rng.uniform(-0.9, 0.9, 320).astype(np.float64), 16_000)
        path = tmp_path / "a.wav"
        write_wav(path, wave, encoding="float32")
        back = read_wav(path)
        assert back.sample_rate == 16_000
        np.testing.assert_allclose(back.samples, wave.samples, atol=1e-6)

    def test_pcm16_roundtrip(self, tmp_path, rng):
        wave = Waveform(rng.uniform(-0.9, 0.9, 200), 8_000)
        path = tmp_path / "a.wav"
        write_wav(path, wave, encoding="pcm16")
        back = read_wav(path)
        assert back.sample_rate == 8_000
        np.testing.assert_allclose(back.samples, wave.samples, atol=2.0 / 32768)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.wav"
        path.write_bytes(b"OGGS" + b"\x00" * 60)
        with pytest.raises(FormatError):
            read_wav(path)

    def test_truncated_rejected(self, tmp_path, rng):
        path = tmp_path / "a.wav"
        write_wav(path, Waveform(rng.uniform(-0.5, 0.5, 100), 16_000))
        blob = path.read_bytes()
        path.write_bytes(blob[: len(blob) // 2])
        with pytest.raises(FormatError):
            read_wav(path)

    def test_stereo_rejected(self, tmp_path):
        # Hand-build a 2-channel PCM16 header.
        import struct

        frames = 4
        data = struct.pack("<8h", *([0] * 8))
        fmt = struct.pack("<HHIIHH", 1, 2, 8000, 8000 * 4, 4, 16)
        body = (
            b"WAVE"
            + b"fmt "
            + struct.pack("<I", len(fmt))
            + fmt
            + b"data"
            + struct.pack("<I", len(data))
            + data
        )
        path = tmp_path / "stereo.wav"
        path.write_bytes(b"RIFF" + struct.pack("<I", len(body)) + body)
        with pytest.raises(FormatError):
            read_wav(path)

    def test_unknown_chunk_skipped(self, tmp_path, rng):
        wave = Waveform(rng.uniform(-0.5, 0.5, 64), 16_000)
        path = tmp_path / "a.wav"
        write_wav(path, wave, encoding="pcm16")
        blob = bytearray(path.read_bytes())
        # Splice a LIST chunk between fmt and data.
        import struct

        data_at = blob.index(b"data")
        extra = b"LIST" + struct.pack("<I", 4) + b"INFO"
        patched = bytes(blob[:data_at]) + extra + bytes(blob[data_at:])
        patched = patched[:4] + struct.pack("<I", len(patched) - 8) + patched[8:]
        path.write_bytes(patched)
        back = read_wav(path)
        assert back.samples.size == 64


class TestEmbedding:
    def test_binary_roundtrip(self, tmp_path, rng):
        emb = EmbeddingSequence(rng.standard_normal((150, 16)), 50.0)
        path = tmp_path / "a.emb"
        write_embedding(path, emb)
        back = read_embedding(path)
        assert back.frame_rate == 50.0
        np.testing.assert_allclose(back.frames, emb.frames, atol=1e-6)

    def test_fractional_rate_rejected_on_write(self, tmp_path, rng):
        emb = EmbeddingSequence(rng.standard_normal((10, 4)), 12.5)
        with pytest.raises(FormatError):
            write_embedding(tmp_path / "a.emb", emb)

    def test_garbage_rejected(self, tmp_path):
        path = tmp_path / "a.emb"
        path.write_bytes(b"NOPE" + b"\x00" * 40)
        with pytest.raises(FormatError):
            read_embedding(path)

    def test_truncation_rejected(self, tmp_path, rng):
        path = tmp_path / "a.emb"
        write_embedding(path, EmbeddingSequence(rng.standard_normal((20, 8)), 50.0))
        blob = path.read_bytes()
        path.write_bytes(blob[:-16])
        with pytest.raises(FormatError):
            read_embedding(path)

    def test_csv_fallback(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("0.0,1.0\n2.0,3.0\n4.0,5.0\n")
        emb = read_embedding_csv(path, frame_rate=50.0)
        assert emb.frames.shape == (3, 2)
        assert emb.frames[2, 1] == 5.0

    def test_csv_ragged_rejected(self, tmp_path):
        path = tmp_path / "a.csv"
        path.write_text("0.0,1.0\n2.0\n")
        with pytest.raises(FormatError):
            read_embedding_csv(path, frame_rate=50.0)


class TestManifest:
    def test_roundtrip(self, tmp_path):
        entries = [
            ManifestEntry("seg-0", "genuine", "wav/seg-0.wav", "emb/seg-0.emb"),
            ManifestEntry("seg-1", "deepfake", "wav/seg-1.wav", "emb/seg-1.emb"),
        ]
        path = tmp_path / "manifest.jsonl"
        write_manifest(path, entries)
        assert read_manifest(path) == entries

    def test_blank_lines_skipped(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        record = json.dumps(
            {
                "source_id": "seg-0",
                "label": "genuine",
                "wav_path": "a.wav",
                "emb_path": "a.emb",
            }
        )
        path.write_text("\n" + record + "\n\n")
        assert len(read_manifest(path)) == 1

    def test_error_carries_line_number(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        good = json.dumps(
            {
                "source_id": "seg-0",
                "label": "genuine",
                "wav_path": "a.wav",
                "emb_path": "a.emb",
            }
        )
        path.write_text(good + "\n{not json}\n")
        with pytest.raises(FormatError, match=r":2:"):
            read_manifest(path)

    def test_missing_field_rejected(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text(json.dumps({"source_id": "seg-0", "label": "genuine"}) + "\n")
        with pytest.raises(FormatError):
            read_manifest(path)

    def test_bad_label_rejected(self, tmp_path):
        path = tmp_path / "manifest.jsonl"
        path.write_text(
            json.dumps(
                {
                    "source_id": "seg-0",
                    "label": "synthetic",
                    "wav_path": "a.wav",
                    "emb_path": "a.emb",
                }
            )
            + "\n"
        )
        with pytest.raises(FormatError):
            read_manifest(path)


class TestFeatureCsv:
    def test_roundtrip_exact(self, tmp_path, rng):
        ids = ["a", "b", "c"]
        labels = ["genuine", "deepfake", "genuine"]
        matrix = rng.standard_normal((3, 6))
        rows = [
            (sid, label, PhysicsVector(*map(float, row)))
            for sid, label, row in zip(ids, labels, matrix)
        ]
        path = tmp_path / "features.csv"
        write_feature_csv(path, rows)
        r_ids, r_labels, r_rows = read_feature_csv(path)
        assert r_ids == ids
        assert r_labels == labels
        # repr round trip is exact for doubles.
        np.testing.assert_array_equal(r_rows, matrix)

    def test_header_enforced(self, tmp_path):
        path = tmp_path / "features.csv"
        path.write_text("id,label,x\none,genuine,1.0\n")
        with pytest.raises(FormatError):
            read_feature_csv(path)

    def test_column_count_enforced(self, tmp_path):
        path = tmp_path / "features.csv"
        path.write_text(",".join(FEATURE_CSV_HEADER) + "\n" + "a,genuine,1.0,2.0\n")
        with pytest.raises(FormatError):
            read_feature_csv(path)

    def test_bad_float_rejected(self, tmp_path):
        path = tmp_path / "features.csv"
        row = "a,genuine," + ",".join(["oops"] + ["0.0"] * 5)
        path.write_text(",".join(FEATURE_CSV_HEADER) + "\n" + row + "\n")
        with pytest.raises(FormatError):
            read_feature_csv(path)


class TestFusedCsv:
    def test_roundtrip_exact(self, tmp_path, rng):
        ids = ["s1", "s2"]
        labels = ["deepfake", "genuine"]
        rows = rng.standard_normal((2, 10))
        path = tmp_path / "fused.csv"
        write_fused_csv(path, ids, labels, rows)
        r_ids, r_labels, r_rows = read_fused_csv(path)
        assert r_ids == ids
        assert r_labels == labels
        np.testing.assert_array_equal(r_rows, rows)

    def test_width_mismatch_rejected(self, tmp_path):
        path = tmp_path / "fused.csv"
        path.write_text("source_id,label,f0,f1\na,genuine,1.0\n")
        with pytest.raises(FormatError):
            read_fused_csv(path)


class TestPredictionsJsonl:
    @staticmethod
    def _pred(p_genuine):
        return McPredictive.from_samples(
            np.array([[p_genuine, 1.0 - p_genuine]] * 3)
        )

    def test_roundtrip(self, tmp_path):
        ids = ["a", "b"]
        labels = ["genuine", "deepfake"]
        preds = [self._pred(0.9), self._pred(0.2)]
        path = tmp_path / "pred.jsonl"
        write_predictions_jsonl(path, ids, labels, preds)
        back = read_predictions_jsonl(path)
        assert [r["source_id"] for r in back] == ids
        assert [r["label"] for r in back] == labels
        assert [r["p_genuine"] for r in back] == [p.p_genuine for p in preds]
        assert back[0]["total_u"] == preds[0].total_u
        assert back[1]["epistemic_u"] == preds[1].epistemic_u

    def test_misaligned_rejected(self, tmp_path):
        with pytest.raises(ShapeError):
            write_predictions_jsonl(
                tmp_path / "pred.jsonl",
                ["a"],
                ["genuine", "deepfake"],
                [self._pred(0.5)],
            )

    def test_missing_key_rejected(self, tmp_path):
        path = tmp_path / "pred.jsonl"
        path.write_text(json.dumps({"source_id": "a", "label": "genuine"}) + "\n")
        with pytest.raises(FormatError):
            read_predictions_jsonl(path)


class TestMetricReport:
    def test_roundtrip(self, tmp_path):
        report = MetricReport(
            eer=0.125,
            eer_threshold=0.4,
            roc_auc=0.93,
            min_tdcf=0.31,
            n_genuine=50,
            n_fake=60,
        )
        path = tmp_path / "report.json"
        write_metric_report(path, report)
        back = read_metric_report(path)
        assert back == {
            "eer": 0.125,
            "eer_threshold": 0.4,
            "roc_auc": 0.93,
            "min_tdcf": 0.31,
            "n_genuine": 50,
            "n_fake": 60,
        }


class TestEcdfCsv:
    def test_roundtrip_exact(self, tmp_path, rng):
        table = ecdf_table(rng.standard_normal(25), rng.standard_normal(30) + 0.5)
        path = tmp_path / "ecdf.csv"
        write_ecdf_csv(path, table, "genuine", "deepfake")
        back = read_ecdf_csv(path)
        np.testing.assert_array_equal(back.values, table.values)
        np.testing.assert_array_equal(back.ecdf_a, table.ecdf_a)
        np.testing.assert_array_equal(back.ecdf_b, table.ecdf_b)
        assert back.ks_index == table.ks_index
        assert back.ks_distance == table.ks_distance

    def test_missing_ks_mark_rejected(self, tmp_path, rng):
        table = ecdf_table(rng.standard_normal(10), rng.standard_normal(10))
        path = tmp_path / "ecdf.csv"
        write_ecdf_csv(path, table, "genuine", "deepfake")
        lines = path.read_text().splitlines()
        cleaned = [lines[0]] + [
            line[:-1] + "0" if line.endswith(",1") else line for line in lines[1:]
        ]
        path.write_text("\n".join(cleaned) + "\n")
        with pytest.raises(FormatError):
            read_ecdf_csv(path)


def test_writes_are_atomic(tmp_path, rng):
    # No temporary droppings next to any artifact after a batch of writes.
    write_wav(tmp_path / "a.wav", Waveform(rng.uniform(-0.5, 0.5, 50), 16_000))
    write_embedding(
        tmp_path / "a.emb", EmbeddingSequence(rng.standard_normal((5, 3)), 50.0)
    )
    write_manifest(
        tmp_path / "m.jsonl", [ManifestEntry("a", "genuine", "a.wav", "a.emb")]
    )
    write_feature_csv(
        tmp_path / "f.csv", [("a", "genuine", PhysicsVector(*[0.0] * 6))]
    )
    leftovers = [p for p in tmp_path.iterdir() if p.suffix == ".tmp"]
    assert leftovers == []
