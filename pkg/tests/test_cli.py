import json
from pathlib import Path

import pytest

from arbsim.cli import (EXIT_DATA, EXIT_OK, EXIT_USAGE, RunConfig, UsageError,
                        load_config, main)


def test_load_config_defaults_and_overrides(tmp_path):
    config = load_config(None, {})
    assert config.counts == {"train": 2000, "val": 500, "test": 1000}
    assert config.epochs == 30
    path = tmp_path / "run.yaml"
    path.write_text("seed: 5\nepochs: 2\nepsilons: [0.0, 1.0]\n")
    config = load_config(str(path), {"seed": 9})
    assert config.seed == 9  # CLI override wins
    assert config.epochs == 2
    assert config.epsilons == (0.0, 1.0)


def test_load_config_rejects_unknown_keys(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("learning_rat: 0.1\n")
    with pytest.raises(UsageError):
        load_config(str(path), {})
    with pytest.raises(UsageError):
        load_config(str(tmp_path / "missing.yaml"), {})


def test_content_hash_tracks_config():
    a = RunConfig(seed=0)
    b = RunConfig(seed=1)
    assert a.content_hash() == RunConfig(seed=0).content_hash()
    assert a.content_hash() != b.content_hash()
    assert len(a.content_hash()) == 16


def test_usage_errors_exit_1(capsys):
    assert main(["bogus-command"]) == EXIT_USAGE
    assert main(["gen", "--splits", "1,2"]) == EXIT_USAGE
    capsys.readouterr()


def test_data_errors_exit_2(tmp_path, capsys):
    out = str(tmp_path / "out")
    # render before gen
    assert main(["render", "--out", out, "--gscv2-root", str(tmp_path)]) \
        == EXIT_DATA
    # render without a corpus root
    assert main(["render", "--out", out]) == EXIT_DATA
    # eval before render
    assert main(["eval", "--out", out]) == EXIT_DATA
    capsys.readouterr()


@pytest.fixture(scope="module")
def full_run(tmp_path_factory, corpus_root):
    """gen -> render -> train -> eval -> report on a miniature config."""
    root = tmp_path_factory.mktemp("cli")
    out = root / "out"
    config = root / "run.yaml"
    config.write_text(
        f"gscv2_root: {corpus_root}\n"
        f"out_root: {out}\n"
        "seed: 3\n"
        "epochs: 2\n"
        "batch_size: 8\n"
        "counts: {train: 8, val: 4, test: 5}\n")
    args = ["--config", str(config)]
    assert main(["gen"] + args) == EXIT_OK
    assert main(["render"] + args) == EXIT_OK
    assert main(["train"] + args) == EXIT_OK
    assert main(["eval"] + args) == EXIT_OK
    assert main(["report"] + args) == EXIT_OK
    return out, args


def test_full_run_artifacts(full_run):
    out, _ = full_run
    assert (out / "scenarios" / "train.jsonl").exists()
    gen_manifest = json.loads((out / "scenarios" / "manifest.json").read_text())
    assert gen_manifest["splits"]["test"]["count"] == 5

    test_dir = out / "dataset" / "test"
    entries = [json.loads(l) for l in
               (test_dir / "manifest.jsonl").read_text().splitlines()]
    assert len(entries) == 5
    for entry in entries:
        assert entry["n_devices"] == len(entry["distances"])
        assert 0 <= entry["label"] < entry["n_devices"]
        for rel in entry["wavs"] + entry["features"]:
            assert (out / "dataset" / rel).exists()

    ckpt = json.loads((out / "checkpoint" / "manifest.json").read_text())
    assert ckpt["param_count"] == 124657
    log = (out / "training_log.csv").read_text().splitlines()
    assert log[0] == "epoch,train_loss,train_accuracy,val_accuracy"
    assert len(log) == 3  # header + 2 epochs

    summary = json.loads((out / "eval" / "summary.json").read_text())
    assert {"accuracy_baseline", "accuracy_dnn"} <= set(summary)
    comparison = json.loads((out / "eval" / "comparison.json").read_text())
    assert "relative_error_rate" in comparison
    assert len(comparison["epsilon_relative_error"]) == 5


def test_eval_refuses_config_mismatch(full_run, capsys):
    out, args = full_run
    # changing the seed changes the config hash; eval must refuse stale data
    assert main(["eval"] + args + ["--seed", "99"]) == EXIT_DATA
    assert main(["eval"] + args + ["--seed", "99", "--force"]) == EXIT_OK
    # restore untainted reports for any later reader
    assert main(["eval"] + args) == EXIT_OK
    capsys.readouterr()


def test_train_resume_extends_log(full_run):
    out, args = full_run
    assert main(["train"] + args + ["--resume"]) == EXIT_OK
    log = (out / "training_log.csv").read_text().splitlines()
    assert len(log) == 5  # header + 2 original + 2 resumed epochs
    epochs = [int(l.split(",")[0]) for l in log[1:]]
    assert epochs == [0, 1, 2, 3]


def test_gen_deterministic(tmp_path, corpus_root, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert main(["gen", "--out", str(out), "--seed", "11",
                     "--splits", "4,2,2"]) == EXIT_OK
    for split in ("train", "val", "test"):
        assert (a / "scenarios" / f"{split}.jsonl").read_text() == \
            (b / "scenarios" / f"{split}.jsonl").read_text()
    capsys.readouterr()
