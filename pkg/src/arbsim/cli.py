"""Command-line orchestration: gen -> render -> train -> eval -> report.

All settings live in one declarative config file (YAML or JSON); a content
hash of the config is stamped into every artifact, and eval refuses to mix
artifacts from different configs unless forced.

Exit codes: 0 success, 1 usage error, 2 data error, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import audio, features, metrics, pipeline, training
from .baseline import baseline_arbitrate
from .metrics import EvalRecord, EvalReport
from .scenario import (GenConfig, SamplingError, ground_truth,
                       read_scenarios_jsonl, sample_scenario,
                       write_scenarios_jsonl)
from .training import Example, TrainHyper

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NUMERIC = 3

SPLITS = ("train", "val", "test")


class UsageError(ValueError):
    pass


class DataError(RuntimeError):
    pass


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    counts: dict = field(default_factory=lambda: {
        "train": 2000, "val": 500, "test": 1000})
    gscv2_root: str = ""
    out_root: str = "out"
    noise_free: bool = False
    anechoic: bool = False
    train_render_copies: int = 6
    epochs: int = 30
    learning_rate: float = 1e-3
    batch_size: int = 64
    epsilons: tuple[float, ...] = (0.0, 0.25, 0.5, 1.0, 2.0)
    delta_bin_width: float = 1.0

    def gen_config(self) -> GenConfig:
        return GenConfig(noise_free=self.noise_free, anechoic=self.anechoic)

    def hyper(self) -> TrainHyper:
        return TrainHyper(epochs=self.epochs, learning_rate=self.learning_rate,
                          batch_size=self.batch_size)

    def content_hash(self) -> str:
        blob = json.dumps(dataclasses.asdict(self), sort_keys=True)
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def load_config(path: str | None, overrides: dict) -> RunConfig:
    data = {}
    if path:
        try:
            import yaml

            with open(path) as f:
                data = yaml.safe_load(f) or {}
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}")
    data.update({k: v for k, v in overrides.items() if v is not None})
    valid = {f.name for f in dataclasses.fields(RunConfig)}
    unknown = set(data) - valid
    if unknown:
        raise UsageError(f"unknown config keys: {sorted(unknown)}")
    if "epsilons" in data:
        data["epsilons"] = tuple(data["epsilons"])
    return RunConfig(**data)


# --- gen -------------------------------------------------------------------

def cmd_gen(config: RunConfig) -> None:
    out = Path(config.out_root) / "scenarios"
    out.mkdir(parents=True, exist_ok=True)
    gen_cfg = config.gen_config()
    manifest = {"config_hash": config.content_hash(), "splits": {}}
    for split in SPLITS:
        count = int(config.counts[split])
        scenarios = []
        for i in range(count):
            seed = pipeline.derive_seed(config.seed, pipeline.STREAM_SCENARIO,
                                        split, i)
            try:
                scenarios.append(sample_scenario(seed, gen_cfg))
            except SamplingError as e:
                raise DataError(f"scenario {split}/{i}: {e}")
        path = out / f"{split}.jsonl"
        write_scenarios_jsonl(scenarios, path)
        manifest["splits"][split] = {"count": count, "file": path.name}
    with open(out / "manifest.json", "w") as f:
        json.dump(manifest, f, indent=2)
    print(f"gen: wrote {out}")


# --- render ----------------------------------------------------------------

def cmd_render(config: RunConfig, splits=SPLITS) -> None:
    if not config.gscv2_root:
        raise DataError("gscv2_root is not set")
    catalog = audio.ingest_gscv2(config.gscv2_root)
    scen_dir = Path(config.out_root) / "scenarios"
    data_dir = Path(config.out_root) / "dataset"
    config_hash = config.content_hash()
    for split in splits:
        scen_path = scen_dir / f"{split}.jsonl"
        if not scen_path.exists():
            raise DataError(f"missing scenario file {scen_path}; run gen first")
        split_dir = data_dir / split
        split_dir.mkdir(parents=True, exist_ok=True)
        # training-only augmentation: re-render each scenario with fresh
        # source/jitter draws; copy 0 is the canonical render for every split
        n_copies = config.train_render_copies if split == "train" else 1
        entries = []
        for i, scenario in enumerate(read_scenarios_jsonl(scen_path)):
            rirs = pipeline.compute_scenario_rirs(scenario)
            for copy in range(n_copies):
                seed = pipeline.derive_seed(
                    config.seed, pipeline.STREAM_RENDER, split, i, copy)
                rendered = pipeline.render_scenario(scenario, catalog, split,
                                                    seed, rirs=rirs)
                suffix = f"_r{copy}" if copy else ""
                sdir = split_dir / f"scenario_{i:05d}{suffix}"
                sdir.mkdir(exist_ok=True)
                wavs, feats = [], []
                for w in rendered.device_waveforms:
                    wav_path = sdir / f"device{w.device_index}.wav"
                    audio.write_wav_float32(wav_path, w.samples)
                    feat_path = sdir / f"device{w.device_index}.lfbe"
                    features.save_lfbe(
                        feat_path, features.compute_lfbe(w.samples),
                        config_hash)
                    wavs.append(str(wav_path.relative_to(data_dir)))
                    feats.append(str(feat_path.relative_to(data_dir)))
                entries.append({
                    "scenario_id": f"{split}/{i:05d}{suffix}",
                    "n_devices": len(rendered.device_waveforms),
                    "label": rendered.truth.closest_index,
                    "distances": list(rendered.truth.distances),
                    "speech_id": rendered.speech_id,
                    "noise_ids": list(rendered.noise_ids),
                    "render_copy": copy,
                    "wavs": wavs,
                    "features": feats,
                })
        with open(split_dir / "manifest.jsonl", "w") as f:
            for entry in entries:
                f.write(json.dumps(entry) + "\n")
        with open(split_dir / "manifest.json", "w") as f:
            json.dump({"config_hash": config_hash, "count": len(entries),
                       "render_copies": n_copies}, f)
        print(f"render: {split}: {len(entries)} renders "
              f"({n_copies} per scenario)")


def _read_split_manifest(config: RunConfig, split: str) -> list[dict]:
    split_dir = Path(config.out_root) / "dataset" / split
    path = split_dir / "manifest.jsonl"
    if not path.exists():
        raise DataError(f"missing dataset manifest {path}; run render first")
    with open(path) as f:
        return [json.loads(line) for line in f if line.strip()]


def _split_hash(config: RunConfig, split: str) -> str:
    path = Path(config.out_root) / "dataset" / split / "manifest.json"
    if not path.exists():
        raise DataError(f"missing dataset manifest {path}")
    with open(path) as f:
        return json.load(f).get("config_hash", "")


def _load_examples(config: RunConfig, split: str) -> list[Example]:
    data_dir = Path(config.out_root) / "dataset"
    examples = []
    for entry in _read_split_manifest(config, split):
        stack = np.stack([
            features.load_lfbe(data_dir / p).values.astype(np.float32)
            for p in entry["features"]])
        examples.append(Example(features=stack, label=entry["label"],
                                scenario_id=entry["scenario_id"]))
    return examples


# --- train -----------------------------------------------------------------

def cmd_train(config: RunConfig, resume: bool = False) -> None:
    train_set = _load_examples(config, "train")
    val_set = _load_examples(config, "val")
    ckpt_dir = Path(config.out_root) / "checkpoint"
    log_path = Path(config.out_root) / "training_log.csv"

    initial_model, start_epoch, old_log = None, 0, []
    if resume:
        initial_model, _ = training.load_checkpoint(ckpt_dir)
        with open(log_path) as f:
            old_log = list(csv.DictReader(f))
        start_epoch = int(old_log[-1]["epoch"]) + 1 if old_log else 0

    model, log = training.train(train_set, val_set, hyper=config.hyper(),
                                rng_seed=config.seed,
                                initial_model=initial_model,
                                start_epoch=start_epoch)
    training.save_checkpoint(ckpt_dir, model, config.hyper(),
                             config_hash=config.content_hash())
    with open(log_path, "w", newline="") as f:
        writer = csv.DictWriter(
            f, fieldnames=["epoch", "train_loss", "train_accuracy",
                           "val_accuracy"])
        writer.writeheader()
        for row in old_log + log:
            writer.writerow(row)
    best = model.best_val_accuracy
    best_str = f"{best:.4f}" if best is not None else "n/a"
    print(f"train: best val accuracy {best_str} "
          f"(epoch {model.best_epoch}), params {model.param_count}")


# --- eval ------------------------------------------------------------------

def _eval_records_baseline(config: RunConfig, split: str) -> list[EvalRecord]:
    data_dir = Path(config.out_root) / "dataset"
    records = []
    for entry in _read_split_manifest(config, split):
        waveforms = [audio.read_wav(data_dir / p)[0] for p in entry["wavs"]]
        chosen = baseline_arbitrate(waveforms)
        records.append(EvalRecord(
            scenario_id=entry["scenario_id"],
            distances=tuple(entry["distances"]),
            chosen_index=chosen,
            closest_index=entry["label"]))
    return records


def _eval_records_dnn(config: RunConfig, split: str, model) -> list[EvalRecord]:
    records = []
    for example, entry in zip(_load_examples(config, split),
                              _read_split_manifest(config, split)):
        chosen = training.predict(model, example.features)
        records.append(EvalRecord(
            scenario_id=entry["scenario_id"],
            distances=tuple(entry["distances"]),
            chosen_index=chosen,
            closest_index=entry["label"]))
    return records


def cmd_eval(config: RunConfig, system: str = "both", split: str = "test",
             force: bool = False) -> dict:
    eval_dir = Path(config.out_root) / "eval"
    config_hash = config.content_hash()
    data_hash = _split_hash(config, split)
    if data_hash != config_hash and not force:
        raise DataError(
            f"dataset hash {data_hash} != config hash {config_hash}; "
            f"use --force to evaluate anyway")

    summary = {"config_hash": config_hash, "split": split}
    reports = {}
    if system in ("baseline", "both"):
        records = _eval_records_baseline(config, split)
        reports["baseline"] = EvalReport.from_records(
            records, config.epsilons, config.delta_bin_width)
    if system in ("dnn", "both"):
        ckpt_dir = Path(config.out_root) / "checkpoint"
        if not (ckpt_dir / "manifest.json").exists():
            raise DataError(f"missing checkpoint at {ckpt_dir}")
        model, manifest = training.load_checkpoint(ckpt_dir)
        if manifest.get("config_hash") != config_hash and not force:
            raise DataError("checkpoint hash differs from config hash; "
                            "use --force to evaluate anyway")
        records = _eval_records_dnn(config, split, model)
        reports["dnn"] = EvalReport.from_records(
            records, config.epsilons, config.delta_bin_width)

    for name, report in reports.items():
        metrics.write_report(report, eval_dir, name, config_hash)
        summary[f"accuracy_{name}"] = report.accuracy
    if "baseline" in reports and "dnn" in reports:
        summary["relative_error_rate"] = metrics.relative_error(
            reports["baseline"].accuracy, reports["dnn"].accuracy)
    with open(eval_dir / "summary.json", "w") as f:
        json.dump(summary, f, indent=2)
    print(f"eval: {json.dumps({k: v for k, v in summary.items() if k != 'records'})}")
    return summary


# --- report ----------------------------------------------------------------

def cmd_report(config: RunConfig) -> None:
    """Combine baseline and DNN eval outputs into per-bin relative errors."""
    eval_dir = Path(config.out_root) / "eval"
    out = {}
    for name in ("baseline", "dnn"):
        path = eval_dir / f"{name}_report.json"
        if not path.exists():
            raise DataError(f"missing {path}; run eval with --system both")
        with open(path) as f:
            out[name] = json.load(f)
    rel_delta = []
    for bl, dnn in zip(out["baseline"]["delta_curve"], out["dnn"]["delta_curve"]):
        acc_bl, acc_dnn = bl["accuracy"], dnn["accuracy"]
        rel = None
        if acc_bl is not None and acc_dnn is not None and acc_bl < 1.0:
            rel = metrics.relative_error(acc_bl, acc_dnn)
        rel_delta.append({"bin_lower_m": bl["bin_lower_m"],
                          "relative_error": rel, "count": bl["count"]})
    rel_eps = []
    for bl, dnn in zip(out["baseline"]["epsilon_curve"],
                       out["dnn"]["epsilon_curve"]):
        rel = None
        if bl["epsilon_accuracy"] < 1.0:
            rel = metrics.relative_error(bl["epsilon_accuracy"],
                                         dnn["epsilon_accuracy"])
        rel_eps.append({"epsilon_m": bl["epsilon_m"], "relative_error": rel})
    report = {
        "accuracy_baseline": out["baseline"]["accuracy"],
        "accuracy_dnn": out["dnn"]["accuracy"],
        "relative_error_rate": metrics.relative_error(
            out["baseline"]["accuracy"], out["dnn"]["accuracy"]),
        "delta_relative_error": rel_delta,
        "epsilon_relative_error": rel_eps,
    }
    with open(eval_dir / "comparison.json", "w") as f:
        json.dump(report, f, indent=2)
    print(json.dumps({k: report[k] for k in
                      ("accuracy_baseline", "accuracy_dnn",
                       "relative_error_rate")}, indent=2))


# --- entry point -----------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="arbsim")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen", "render", "train", "eval", "report"):
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out", dest="out_root", default=None)
        p.add_argument("--splits", default=None,
                       help="comma-separated split counts train,val,test")
        p.add_argument("--noise-free", action="store_true", default=None)
        p.add_argument("--anechoic", action="store_true", default=None)
        if name == "train":
            p.add_argument("--resume", action="store_true")
        if name == "eval":
            p.add_argument("--system", choices=("baseline", "dnn", "both"),
                           default="both")
            p.add_argument("--split", default="test")
            p.add_argument("--force", action="store_true")
        if name == "render":
            p.add_argument("--gscv2-root", dest="gscv2_root", default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        overrides = {k: getattr(args, k, None)
                     for k in ("seed", "out_root", "noise_free", "anechoic",
                               "gscv2_root")}
        if getattr(args, "splits", None):
            parts = [int(x) for x in args.splits.split(",")]
            if len(parts) != 3:
                raise UsageError("--splits needs train,val,test counts")
            overrides["counts"] = dict(zip(SPLITS, parts))
        config = load_config(args.config, overrides)
        if args.command == "gen":
            cmd_gen(config)
        elif args.command == "render":
            cmd_render(config)
        elif args.command == "train":
            cmd_train(config, resume=args.resume)
        elif args.command == "eval":
            cmd_eval(config, system=args.system, split=args.split,
                     force=args.force)
        elif args.command == "report":
            cmd_report(config)
        return EXIT_OK
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except training.NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, audio.AudioError, features.FeatureError, OSError,
            SamplingError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
