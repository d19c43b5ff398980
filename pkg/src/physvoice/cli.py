"""Command-line driver.

Subcommands cover each pipeline stage (synth, extract, fuse, train,
predict, metrics), the federated simulation (flsim), and the end-to-end
run (pipeline). Configuration is an INI file with one section per stage;
every value has a default, so a bare command works out of the box. One
--seed fans out to every random consumer through named substreams.

Exit codes: 0 success, 1 partial data failures (some inputs unreadable or
a metric undefined on the data), 2 configuration or usage errors.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .classifier import DropoutMlpClassifier, TrainConfig, load_model, save_model
from .errors import PhysvoiceError, ScenarioError
from .federated import ScenarioConfig, flag_statistics, prepare_scenario, run_simulation
from .fileio import (
    FEATURE_CSV_HEADER,
    ManifestEntry,
    read_feature_csv,
    read_fused_csv,
    read_predictions_jsonl,
    write_ecdf_csv,
    write_embedding,
    write_feature_csv,
    write_fused_csv,
    write_json,
    write_jsonl_records,
    write_manifest,
    write_metric_report,
    write_predictions_jsonl,
    write_wav,
)
from .fusion import OrthogonalFusion, load_fusion, save_fusion
from .metrics import ScoreSet, TdcfCosts, compute_metric_report, ecdf_table
from .pipeline import (
    build_design_matrix,
    extract_feature_rows,
    load_corpus_from_manifest,
    run_detection_pipeline,
)
from .signals import LABEL_DEEPFAKE, LABEL_GENUINE, label_to_int
from .synth import SyntheticCorpusSpec, generate_synthetic


class UsageError(Exception):
    """Bad configuration or flags; maps to exit code 2."""


def _parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("1", "true", "yes", "on"):
        return True
    if lowered in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


_CORPUS_KEYS = {
    "source": str,
    "manifest": str,
    "n_genuine": int,
    "n_fake": int,
    "dims": int,
    "length": int,
    "frame_rate": float,
    "sample_rate": int,
    "velocity_scale_fake": float,
    "smoothness": float,
    "segment_scale_jitter": float,
    "fake_scale_jitter": float,
    "start_scale": float,
    "dyn_range_db_genuine": float,
    "dyn_range_db_genuine_spread": float,
    "fake_dyn_drop_min": float,
    "fake_dyn_drop_max": float,
}
_SPLIT_KEYS = {"train_fraction": float}
_HEAD_KEYS = {
    "hidden1": int,
    "hidden2": int,
    "dropout_rate": float,
    "epochs": int,
    "learning_rate": float,
    "batch_size": int,
    "class_weighting": _parse_bool,
}
_MC_KEYS = {"n_samples": int}
_TDCF_KEYS = {
    "pi_target": float,
    "pi_nontarget": float,
    "pi_spoof": float,
    "cm_miss_cost": float,
    "cm_fa_cost": float,
    "asv_miss_cost": float,
    "asv_fa_cost": float,
    "asv_p_miss": float,
    "asv_p_fa": float,
    "asv_p_fa_spoof": float,
}
_SCENARIO_KEYS = {
    "n_clients": int,
    "shard_size": int,
    "public_size": int,
    "probe_size": int,
    "heldout_size": int,
    "rounds": int,
    "local_epochs": int,
    "learning_rate": float,
    "batch_size": int,
    "dropout_rate": float,
    "hidden1": int,
    "hidden2": int,
    "class_weighting": _parse_bool,
    "n_mc": int,
    "tau": float,
    "screening": str,
    "attacker_type": str,
    "attacker_count": int,
    "gamma": float,
    "lambda": float,
    "ascent_steps": int,
    "poison_target_size": int,
}
_RUN_KEYS = {"seed": int}
_SCHEMAS = {
    "corpus": _CORPUS_KEYS,
    "split": _SPLIT_KEYS,
    "head": _HEAD_KEYS,
    "mc": _MC_KEYS,
    "tdcf": _TDCF_KEYS,
    "scenario": _SCENARIO_KEYS,
    "run": _RUN_KEYS,
}


def load_config(path: str | None) -> configparser.ConfigParser:
    parser = configparser.ConfigParser()
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise UsageError(f"cannot read config {path}: {exc}") from exc
        except configparser.Error as exc:
            raise UsageError(f"config {path}: {exc}") from exc
        for section in parser.sections():
            if section not in _SCHEMAS:
                raise UsageError(
                    f"config section [{section}] unknown; valid: {sorted(_SCHEMAS)}"
                )
    return parser


def section_values(config: configparser.ConfigParser, section: str) -> dict:
    schema = _SCHEMAS[section]
    out: dict = {}
    if not config.has_section(section):
        return out
    for key, raw in config.items(section):
        if key not in schema:
            raise UsageError(
                f"config [{section}] has unknown key {key!r}; valid: {sorted(schema)}"
            )
        try:
            out[key] = schema[key](raw)
        except ValueError as exc:
            raise UsageError(f"config [{section}] {key}: {exc}") from exc
    return out


def resolve_seed(args, config: configparser.ConfigParser) -> int:
    if args.seed is not None:
        return args.seed
    run = section_values(config, "run")
    return run.get("seed", 0)


def corpus_spec_from(config, seed: int) -> SyntheticCorpusSpec:
    values = section_values(config, "corpus")
    values.pop("source", None)
    values.pop("manifest", None)
    values.setdefault("n_genuine", 500)
    values.setdefault("n_fake", 500)
    try:
        return SyntheticCorpusSpec(seed=seed, **values)
    except ScenarioError as exc:
        raise UsageError(f"config [corpus]: {exc}") from exc


def train_config_from(config, seed: int) -> tuple[TrainConfig, int, int]:
    values = section_values(config, "head")
    hidden1 = values.pop("hidden1", 64)
    hidden2 = values.pop("hidden2", 32)
    try:
        return TrainConfig(seed=seed, **values), hidden1, hidden2
    except ValueError as exc:
        raise UsageError(f"config [head]: {exc}") from exc


def tdcf_costs_from(config) -> TdcfCosts:
    values = section_values(config, "tdcf")
    try:
        return TdcfCosts(**values)
    except PhysvoiceError as exc:
        raise UsageError(f"config [tdcf]: {exc}") from exc


def scenario_from(config, seed: int) -> tuple[ScenarioConfig, str]:
    values = section_values(config, "scenario")
    arm = values.pop("screening", "on")
    if arm not in ("on", "off", "both"):
        raise UsageError("config [scenario] screening must be on, off, or both")
    if "lambda" in values:
        values["lambda_strength"] = values.pop("lambda")
    corpus_values = section_values(config, "corpus")
    corpus_values.pop("source", None)
    corpus_values.pop("manifest", None)
    corpus_values.setdefault("n_genuine", 450)
    corpus_values.setdefault("n_fake", 450)
    corpus_values.setdefault("dims", 8)
    corpus_values.setdefault("sample_rate", 2000)
    try:
        corpus = SyntheticCorpusSpec(seed=seed, **corpus_values)
        scenario = ScenarioConfig(
            corpus=corpus, seed=seed, screening=(arm != "off"), **values
        )
    except ScenarioError as exc:
        raise UsageError(f"config [scenario]: {exc}") from exc
    return scenario, arm


def _echo_config(config: configparser.ConfigParser) -> dict:
    return {s: dict(config.items(s)) for s in config.sections()}


def write_run_manifest(
    out_dir: Path, command: str, seed: int, config, inputs: list[str], outputs: list[str], started: float
) -> None:
    write_json(
        out_dir / "run_manifest.json",
        {
            "command": command,
            "config": _echo_config(config),
            "duration_s": round(time.perf_counter() - started, 6),
            "inputs": sorted(inputs),
            "outputs": sorted(outputs),
            "package_version": __version__,
            "seed": seed,
        },
    )


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _note(args, message: str) -> None:
    if args.verbose:
        print(message, file=sys.stderr)


# -- commands -----------------------------------------------------------------


def cmd_synth(args) -> int:
    started = time.perf_counter()
    config = load_config(args.config)
    seed = resolve_seed(args, config)
    spec = corpus_spec_from(config, seed)
    out = _out_dir(args)
    (out / "wav").mkdir(exist_ok=True)
    (out / "emb").mkdir(exist_ok=True)
    segments = sorted(generate_synthetic(spec), key=lambda s: s.source_id)
    entries = []
    for seg in segments:
        wav_rel = f"wav/{seg.source_id}.wav"
        emb_rel = f"emb/{seg.source_id}.emb"
        write_wav(out / wav_rel, seg.waveform)
        write_embedding(out / emb_rel, seg.embedding)
        entries.append(ManifestEntry(seg.source_id, seg.label, wav_rel, emb_rel))
    write_manifest(out / "manifest.jsonl", entries)
    _note(args, f"wrote {len(entries)} segments under {out}")
    outputs = ["manifest.jsonl"] + [e.wav_path for e in entries] + [e.emb_path for e in entries]
    write_run_manifest(out, "synth", seed, config, [], outputs, started)
    print(f"synth: {len(entries)} segments -> {out / 'manifest.jsonl'}")
    return 0


def _require(value, flag: str):
    if value is None:
        raise UsageError(f"{flag} is required for this command")
    return value


def cmd_extract(args) -> int:
    started = time.perf_counter()
    config = load_config(args.config)
    seed = resolve_seed(args, config)
    manifest = _require(args.manifest, "--manifest")
    out = _out_dir(args)
    segments, errors = load_corpus_from_manifest(manifest, jobs=args.jobs)
    for err in errors:
        print(f"extract: skipped {err}", file=sys.stderr)
    rows = extract_feature_rows(segments, jobs=args.jobs)
    write_feature_csv(out / "features.csv", [(r.source_id, r.label, r.vector) for r in rows])
    write_run_manifest(out, "extract", seed, config, [str(manifest)], ["features.csv"], started)
    print(f"extract: {len(rows)} rows -> {out / 'features.csv'}" + (f" ({len(errors)} skipped)" if errors else ""))
    return 1 if errors else 0


def cmd_fuse(args) -> int:
    started = time.perf_counter()
    config = load_config(args.config)
    seed = resolve_seed(args, config)
    manifest = _require(args.manifest, "--manifest")
    out = _out_dir(args)
    segments, errors = load_corpus_from_manifest(manifest, jobs=args.jobs)
    for err in errors:
        print(f"fuse: skipped {err}", file=sys.stderr)
    ids, labels, x_raw = build_design_matrix(segments)
    fusion = OrthogonalFusion().fit(x_raw)
    fused = fusion.transform(x_raw)
    save_fusion(out / "fusion.qrf", fusion)
    write_fused_csv(out / "fused.csv", ids, labels, fused)
    write_run_manifest(
        out, "fuse", seed, config, [str(manifest)], ["fusion.qrf", "fused.csv"], started
    )
    print(f"fuse: {len(ids)} rows, basis {fusion.basis_.shape} -> {out / 'fusion.qrf'}")
    return 1 if errors else 0


def _labels_to_ints(labels: list[str], context: str) -> np.ndarray:
    try:
        return np.array([label_to_int(l) for l in labels], dtype=np.int64)
    except ValueError as exc:
        raise PhysvoiceError(f"{context}: {exc}") from exc


def cmd_train(args) -> int:
    started = time.perf_counter()
    config = load_config(args.config)
    seed = resolve_seed(args, config)
    fused_path = _require(args.fused, "--fused")
    out = _out_dir(args)
    _, labels, matrix = read_fused_csv(fused_path)
    y = _labels_to_ints(labels, "train")
    train_config, hidden1, hidden2 = train_config_from(config, seed)
    model = DropoutMlpClassifier.from_config(train_config, hidden1, hidden2)
    model.fit(matrix, y)
    save_model(out / "model.mlp", model)
    write_json(
        out / "train_log.json",
        {
            "epochs": train_config.epochs,
            "final_loss": model.loss_curve_[-1],
            "first_loss": model.loss_curve_[0],
            "n_rows": int(matrix.shape[0]),
        },
    )
    write_run_manifest(
        out, "train", seed, config, [str(fused_path)], ["model.mlp", "train_log.json"], started
    )
    print(f"train: loss {model.loss_curve_[0]:.4f} -> {model.loss_curve_[-1]:.4f}, model {out / 'model.mlp'}")
    return 0


def cmd_predict(args) -> int:
    started = time.perf_counter()
    config = load_config(args.config)
    seed = resolve_seed(args, config)
    fused_path = _require(args.fused, "--fused")
    model_path = _require(args.model, "--model")
    out = _out_dir(args)
    ids, labels, matrix = read_fused_csv(fused_path)
    order = np.argsort(np.array(ids))
    ids = [ids[i] for i in order]
    labels = [labels[i] for i in order]
    matrix = matrix[order]
    model = load_model(model_path)
    n_samples = section_values(config, "mc").get("n_samples", 50)
    preds = model.mc_predict_batch(matrix, n_samples, seed=seed)
    write_predictions_jsonl(out / "predictions.jsonl", ids, labels, preds)
    write_run_manifest(
        out,
        "predict",
        seed,
        config,
        [str(fused_path), str(model_path)],
        ["predictions.jsonl"],
        started,
    )
    print(f"predict: {len(ids)} rows -> {out / 'predictions.jsonl'}")
    return 0


def cmd_metrics(args) -> int:
    started = time.perf_counter()
    config = load_config(args.config)
    seed = resolve_seed(args, config)
    predictions_path = _require(args.predictions, "--predictions")
    out = _out_dir(args)
    rows = read_predictions_jsonl(predictions_path)
    genuine = [r["p_genuine"] for r in rows if r["label"] == LABEL_GENUINE]
    fake = [r["p_genuine"] for r in rows if r["label"] == LABEL_DEEPFAKE]
    report = compute_metric_report(
        ScoreSet(np.array(genuine), np.array(fake)), tdcf_costs_from(config)
    )
    write_metric_report(out / "metric_report.json", report)
    outputs = ["metric_report.json"]
    inputs = [str(predictions_path)]
    for feature in args.ecdf_feature or []:
        features_path = _require(args.features, "--features")
        if feature not in FEATURE_CSV_HEADER[2:]:
            raise UsageError(
                f"--ecdf-feature {feature!r} unknown; valid: {FEATURE_CSV_HEADER[2:]}"
            )
        ids, labels, matrix = read_feature_csv(features_path)
        col = FEATURE_CSV_HEADER[2:].index(feature)
        y = _labels_to_ints(labels, "metrics")
        table = ecdf_table(matrix[y == 1, col], matrix[y == 0, col])
        name = f"ecdf_{feature}.csv"
        write_ecdf_csv(out / name, table, "genuine", "deepfake")
        outputs.append(name)
        if str(features_path) not in inputs:
            inputs.append(str(features_path))
        _note(args, f"{feature}: KS distance {table.ks_distance:.4f}")
    write_run_manifest(out, "metrics", seed, config, inputs, outputs, started)
    print(
        f"metrics: eer {report.eer:.4f} auc {report.roc_auc:.4f} "
        f"min_tdcf {report.min_tdcf:.4f} -> {out / 'metric_report.json'}"
    )
    return 0


def cmd_flsim(args) -> int:
    started = time.perf_counter()
    config = load_config(args.config)
    seed = resolve_seed(args, config)
    out = _out_dir(args)
    scenario, arm = scenario_from(config, seed)
    data = prepare_scenario(scenario)
    arms = []
    if arm in ("on", "both"):
        arms.append(("screened", dataclasses.replace(scenario, screening=True)))
    if arm in ("off", "both"):
        arms.append(("unscreened", dataclasses.replace(scenario, screening=False)))
    lines = []
    summary: dict = {"attacker_ids": list(scenario.attacker_ids), "arms": {}}
    for arm_name, arm_config in arms:
        result = run_simulation(arm_config, data)
        for outcome in result.outcomes:
            record = {"arm": arm_name}
            record.update(outcome.to_json_dict())
            lines.append(record)
        arm_summary = {
            "final_eer": result.final_eer,
            "final_ece": result.final_ece,
            "rounds": len(result.outcomes),
        }
        if arm_name == "screened":
            arm_summary.update(flag_statistics(result))
        summary["arms"][arm_name] = arm_summary
        _note(args, f"{arm_name}: final eer {result.final_eer:.4f}")
    write_jsonl_records(out / "rounds.jsonl", lines)
    write_json(out / "flsim_summary.json", summary)
    write_run_manifest(
        out, "flsim", seed, config, [], ["rounds.jsonl", "flsim_summary.json"], started
    )
    screened = summary["arms"].get("screened", {})
    print(
        "flsim: "
        + " ".join(
            f"{name}_eer={arm['final_eer']:.4f}" for name, arm in summary["arms"].items()
        )
        + (
            f" flags={screened.get('n_flags')}"
            if screened
            else ""
        )
    )
    return 0


def cmd_pipeline(args) -> int:
    started = time.perf_counter()
    config = load_config(args.config)
    seed = resolve_seed(args, config)
    out = _out_dir(args)
    corpus_section = section_values(config, "corpus")
    source = corpus_section.get("source", "synthetic")
    errors: list[str] = []
    if source == "manifest":
        manifest = corpus_section.get("manifest") or args.manifest
        manifest = _require(manifest, "[corpus] manifest")
        segments, errors = load_corpus_from_manifest(manifest, jobs=args.jobs)
        for err in errors:
            print(f"pipeline: skipped {err}", file=sys.stderr)
        inputs = [str(manifest)]
    elif source == "synthetic":
        segments = generate_synthetic(corpus_spec_from(config, seed))
        inputs = []
    else:
        raise UsageError(f"config [corpus] source must be synthetic or manifest, got {source!r}")
    train_config, hidden1, hidden2 = train_config_from(config, seed)
    split = section_values(config, "split")
    n_mc = section_values(config, "mc").get("n_samples", 50)
    artifacts = run_detection_pipeline(
        segments,
        train_config,
        n_mc=n_mc,
        train_fraction=split.get("train_fraction", 0.7),
        costs=tdcf_costs_from(config),
        jobs=args.jobs,
        hidden1=hidden1,
        hidden2=hidden2,
    )
    write_feature_csv(
        out / "features.csv",
        [(r.source_id, r.label, r.vector) for r in artifacts.feature_rows],
    )
    save_fusion(out / "fusion.qrf", artifacts.fusion)
    save_model(out / "model.mlp", artifacts.model)
    write_predictions_jsonl(
        out / "predictions.jsonl",
        artifacts.eval_ids,
        artifacts.eval_labels,
        artifacts.predictions,
    )
    write_metric_report(out / "metric_report.json", artifacts.report)
    outputs = [
        "features.csv",
        "fusion.qrf",
        "model.mlp",
        "predictions.jsonl",
        "metric_report.json",
    ]
    for name, table in artifacts.ecdf_tables.items():
        file_name = f"ecdf_{name}.csv"
        write_ecdf_csv(out / file_name, table, "genuine", "deepfake")
        outputs.append(file_name)
    write_run_manifest(out, "pipeline", seed, config, inputs, outputs, started)
    summary = artifacts.uncertainty
    print(
        f"pipeline: eer {artifacts.report.eer:.4f} auc {artifacts.report.roc_auc:.4f} "
        f"min_tdcf {artifacts.report.min_tdcf:.4f} ece {artifacts.ece:.4f} "
        f"u_gap {summary.relative_gap:+.4f}"
    )
    return 1 if errors else 0


# -- parser --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="physvoice",
        description="Physics-guided voice deepfake detection toolkit",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI configuration file")
    common.add_argument("--seed", type=int, help="run seed; overrides [run] seed")
    common.add_argument("--out", default="out", help="output directory (default: out)")
    common.add_argument("--jobs", type=int, default=1, help="parallel workers for per-segment stages")
    common.add_argument("--verbose", action="store_true", help="progress notes on stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic corpus on disk")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("extract", parents=[common], help="physics features from a corpus manifest")
    p.add_argument("--manifest", help="corpus manifest (JSON-lines)")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("fuse", parents=[common], help="fit the orthogonal fusion transform")
    p.add_argument("--manifest", help="corpus manifest (JSON-lines)")
    p.set_defaults(func=cmd_fuse)

    p = sub.add_parser("train", parents=[common], help="train the dropout classifier head")
    p.add_argument("--fused", help="fused feature CSV")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="Monte-Carlo predictions with uncertainty")
    p.add_argument("--fused", help="fused feature CSV")
    p.add_argument("--model", help="trained model file")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("metrics", parents=[common], help="detection metrics from predictions")
    p.add_argument("--predictions", help="predictions JSON-lines")
    p.add_argument("--features", help="feature CSV for ECDF export")
    p.add_argument(
        "--ecdf-feature",
        action="append",
        help="feature column to export as an ECDF table (repeatable)",
    )
    p.set_defaults(func=cmd_metrics)

    p = sub.add_parser("flsim", parents=[common], help="federated trust-screening simulation")
    p.set_defaults(func=cmd_flsim)

    p = sub.add_parser("pipeline", parents=[common], help="full corpus-to-metrics run")
    p.add_argument("--manifest", help="corpus manifest when [corpus] source = manifest")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"physvoice {args.command}: {exc}", file=sys.stderr)
        return 2
    except (ScenarioError,) as exc:
        print(f"physvoice {args.command}: {exc}", file=sys.stderr)
        return 2
    except PhysvoiceError as exc:
        print(f"physvoice {args.command}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"physvoice {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
