import json
import os
import subprocess
import sys
from dataclasses import asdict
from pathlib import Path

import pytest

import main
from conftest import make_tiny_run
from src.frontend import load_dataset
from src.utils.errors import NumericError


@pytest.fixture
def tiny_config(tmp_path):
    run = make_tiny_run("stvh")
    path = tmp_path / "run.json"
    path.write_text(json.dumps(asdict(run)))
    return path


def test_parser_knows_all_commands():
    parser = main.build_parser()
    for command in ("generate", "train", "encode", "fit-filter", "derive-codes", "index", "query", "eval",
                    "attn-dump"):
        assert command in parser._subparsers._group_actions[0].choices
    args = parser.parse_args(["eval", "--db-codes", "a", "--db-labels", "b", "--protocol", "mixed"])
    assert args.protocol == "mixed" and args.layer == -1


def test_generate_command(tmp_path, tiny_config):
    out = tmp_path / "dataset"
    assert main.run_cli(["--config", str(tiny_config), "--out", str(out), "generate"]) == main.EXIT_OK
    dataset = load_dataset(out)
    assert len(dataset.split("train")) == 8
    assert len(dataset.split("test")) == 4


def test_bad_config_exits_with_config_code(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"K": 0}))
    assert main.run_cli(["--config", str(path), "--out", str(tmp_path), "generate"]) == main.EXIT_CONFIG
    assert main.run_cli(["--config", str(tmp_path / "absent.json"), "generate"]) == main.EXIT_CONFIG


@pytest.mark.parametrize("name, value", [("GAH_THREADS", "0"), ("GAH_THREADS", "two"), ("GAH_LOG_LEVEL", "loud")])
def test_bad_environment_exits_with_config_code(tmp_path, monkeypatch, name, value):
    monkeypatch.setenv(name, value)
    assert main.run_cli(["--out", str(tmp_path), "generate"]) == main.EXIT_CONFIG
    assert not (tmp_path / "manifest.json").exists()


def test_bad_environment_at_process_start(tmp_path):
    env = dict(os.environ, GAH_THREADS="0", GAH_LOG_DIR=str(tmp_path / "logs"))
    repo = Path(main.__file__).parent
    result = subprocess.run([sys.executable, str(repo / "main.py"), "--out", str(tmp_path), "generate"],
                            cwd=repo, env=env, capture_output=True, text=True, timeout=120)
    assert result.returncode == main.EXIT_CONFIG, result.stderr


def test_numeric_failure_exit_code(tmp_path, tiny_config, monkeypatch):
    def diverge(run, out_dir):
        raise NumericError("loss is nan")

    monkeypatch.setattr(main, "train", diverge)
    assert main.run_cli(["--config", str(tiny_config), "--out", str(tmp_path), "train"]) == main.EXIT_NUMERIC


def test_other_failures_exit_with_one(tmp_path, tiny_config):
    argv = ["--config", str(tiny_config), "--out", str(tmp_path), "encode", "--checkpoint", str(tmp_path / "none")]
    assert main.run_cli(argv) == main.EXIT_FAILURE


def test_train_encode_eval_commands(tmp_path, tiny_config):
    base = ["--config", str(tiny_config)]
    dataset = tmp_path / "dataset"
    assert main.run_cli(base + ["--out", str(dataset), "generate"]) == main.EXIT_OK
    assert main.run_cli(base + ["--out", str(tmp_path / "train"), "train", "--dataset", str(dataset)]) == 0

    checkpoint = str(tmp_path / "train" / "checkpoints" / "final")
    codes = tmp_path / "codes"
    for split in ("train", "test"):
        argv = base + ["--out", str(codes), "encode", "--checkpoint", checkpoint, "--dataset", str(dataset),
                       "--split", split]
        assert main.run_cli(argv) == main.EXIT_OK

    argv = base + ["--out", str(tmp_path / "eval"), "eval",
                   "--db-codes", str(codes / "codes_train.gahc"), "--db-labels", str(codes / "codes_train.labels.json"),
                   "--query-codes", str(codes / "codes_test.gahc"),
                   "--query-labels", str(codes / "codes_test.labels.json")]
    assert main.run_cli(argv) == main.EXIT_OK
    report = json.loads((tmp_path / "eval" / "eval_activity_layer-1.json").read_text())
    assert report["metric"] == "mAP@3"

    argv = base + ["query", "--codes", str(codes / "codes_train.gahc"),
                   "--labels", str(codes / "codes_train.labels.json"), "--query-id", "0", "--k", "3"]
    assert main.run_cli(argv) == main.EXIT_OK
