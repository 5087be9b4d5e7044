"""End-to-end tests of orchestrator/cli.py on a small synthetic world."""

import json
import os

import pandas as pd
import pytest

from orchestrator.cli import ACTIVATIONS_FILE, FIRING_FILE, WORLD_FILE, run
from src.datagen.activation_file import read_activations
from src.datagen.synthetic_world import load_world
from src.metrics.report import REPORT_FILE, build_report
from src.train.checkpoint import FINAL_CHECKPOINT, METRICS_FILE, load_checkpoint
from src.utils.config import SEED_ENV_VAR

RUN_CONFIG = {
    "mode": "batch_topk",
    "dict_size": 16,
    "k_sparsity": 2,
    "gamma": 0.25,
    "chunk_count": 2,
    "batch_size": 32,
    "total_steps": 20,
    "log_every": 5,
    "seed": 0,
}


@pytest.fixture
def settings_file(tmp_path):
    path = tmp_path / "settings.yaml"
    path.write_text("world:\n  dim_n: 8\n  num_features: 32\n  fire_prob: 0.1\n  rows: 256\n")
    return str(path)


@pytest.fixture
def world_dir(tmp_path, settings_file, monkeypatch):
    monkeypatch.delenv(SEED_ENV_VAR, raising=False)
    out = str(tmp_path / "world")
    assert run(["--settings", settings_file, "gen-data", "--out", out, "--rows", "512", "--seed", "0"]) == 0
    return out


def _train(tmp_path, settings_file, world_dir, name="run", config=None):
    config_path = tmp_path / f"{name}.json"
    config_path.write_text(json.dumps(config or RUN_CONFIG))
    out = str(tmp_path / name)
    code = run([
        "--settings", settings_file, "train",
        "--config", str(config_path),
        "--data", os.path.join(world_dir, ACTIVATIONS_FILE),
        "--out", out,
    ])
    return code, out


# =============================================================================
# Pipeline
# =============================================================================
def test_gen_data_writes_world_and_activations(world_dir):
    x = read_activations(os.path.join(world_dir, ACTIVATIONS_FILE))
    assert x.shape == (512, 8)
    assert load_world(os.path.join(world_dir, WORLD_FILE)).num_features == 32
    firing = pd.read_csv(os.path.join(world_dir, FIRING_FILE))
    assert len(firing) == 32


def test_train_eval_compare_decompose_metasae(tmp_path, settings_file, world_dir, capsys):
    code, run_dir = _train(tmp_path, settings_file, world_dir)
    assert code == 0
    assert os.path.exists(os.path.join(run_dir, FINAL_CHECKPOINT))
    metrics = pd.read_csv(os.path.join(run_dir, METRICS_FILE))
    assert metrics.step.tolist() == [0, 5, 10, 15, 19]

    # eval against itself as reference
    data = os.path.join(world_dir, ACTIVATIONS_FILE)
    world = os.path.join(world_dir, WORLD_FILE)
    assert run(["eval", "--checkpoint", run_dir, "--data", data, "--world", world, "--reference", run_dir]) == 0
    report = pd.read_csv(os.path.join(run_dir, "eval", REPORT_FILE))
    checkpoint = load_checkpoint(run_dir)
    expected = build_report(checkpoint.params, checkpoint.sae_config(), read_activations(data))
    assert report.explained_variance[0] == pytest.approx(expected.explained_variance, rel=1e-12)
    assert report.unique_fraction[0] == 0.0
    assert "METRIC REPORT" in capsys.readouterr().out

    compare_csv = str(tmp_path / "compare.csv")
    assert run(["compare", "--a", run_dir, "--b", run_dir, "--out", compare_csv]) == 0
    assert pd.read_csv(compare_csv).unique_fraction.tolist() == [0.0, 0.0]

    assert run(["decompose", "--a", run_dir, "--b", run_dir]) == 0
    decompositions = pd.read_csv(os.path.join(run_dir, "decompositions.csv"))
    assert len(decompositions) == 16
    assert (decompositions.num_atoms == 1).all()

    capsys.readouterr()
    assert run(["metasae", "--checkpoint", run_dir, "--steps", "3"]) == 0
    out = capsys.readouterr().out
    assert "composition_rate:" in out
    assert os.path.exists(os.path.join(run_dir, "metasae", FINAL_CHECKPOINT))


def test_training_is_reproducible(tmp_path, settings_file, world_dir):
    _, first = _train(tmp_path, settings_file, world_dir, name="first")
    _, second = _train(tmp_path, settings_file, world_dir, name="second")
    with open(os.path.join(first, FINAL_CHECKPOINT), "rb") as a, open(os.path.join(second, FINAL_CHECKPOINT), "rb") as b:
        assert a.read() == b.read()


def test_seed_environment_variable(tmp_path, settings_file, world_dir, monkeypatch):
    monkeypatch.setenv(SEED_ENV_VAR, "9")
    code, run_dir = _train(tmp_path, settings_file, world_dir)
    assert code == 0
    assert load_checkpoint(run_dir).metadata["seed"] == 9


# =============================================================================
# Errors
# =============================================================================
def test_unknown_config_key(tmp_path, settings_file, world_dir, capsys):
    code, _ = _train(tmp_path, settings_file, world_dir, config={**RUN_CONFIG, "dict_sise": 16})
    assert code == 1
    err = capsys.readouterr().err
    assert "error:" in err and "dict_sise" in err


def test_missing_data_file(tmp_path, capsys):
    code = run(["train", "--data", str(tmp_path / "missing.bin"), "--out", str(tmp_path / "run")])
    assert code == 1
    assert "error:" in capsys.readouterr().err


def test_corrupted_activation_file(tmp_path, capsys):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOTMAGIC" + bytes(8))
    code = run(["train", "--data", str(path), "--out", str(tmp_path / "run")])
    assert code == 1
    assert "byte offset 0" in capsys.readouterr().err


def test_usage_errors(capsys):
    assert run([]) == 2
    assert run(["compare", "--a", "x"]) == 2
    capsys.readouterr()

    assert run(["train", "--data", "x.bin", "--out", "run", "--bogus"]) == 2
    lines = capsys.readouterr().err.splitlines()
    assert lines == ["error: unrecognized arguments: --bogus"]


def test_missing_required_flag_is_one_line(capsys):
    assert run(["eval", "--data", "x.bin"]) == 2
    lines = capsys.readouterr().err.splitlines()
    assert len(lines) == 1
    assert lines[0].startswith("error:") and "--checkpoint" in lines[0]
