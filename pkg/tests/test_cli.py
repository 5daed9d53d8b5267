"""Tests for the command-line interface and its exit codes."""

import json

import pytest
from click.testing import CliRunner

from kan_vision import __version__, cli as cli_module, kan
from kan_vision.cli import EXIT_CONFIG, EXIT_DIVERGENCE, EXIT_GRADCHECK, EXIT_IO, cli, parse_seeds
from kan_vision.config import DataConfig, ModelSpec, RunConfig, TrainConfig
from kan_vision.exceptions import ConfigError, DivergenceError
from kan_vision.experiments import presets
from kan_vision.experiments.results import read_records

EDGE_OVERRIDES = ["model.arch=edge_kan", "model.num_classes=2", "data.dataset=edge_left", "train.epochs=3", "train.batch_size=null"]


def _json(output: str):
    """The indented JSON document in ``output``, ignoring log and progress lines around it."""
    lines = output.splitlines()
    start = lines.index("{")
    end = lines.index("}", start)
    return json.loads("\n".join(lines[start : end + 1]))


@pytest.fixture
def runner():
    return CliRunner()


class TestConfigCommands:
    """Test config init and validate."""

    def test_init_and_validate(self, runner, tmp_path):
        path = tmp_path / "run.yml"
        result = runner.invoke(cli, ["config", "init", str(path)])
        assert result.exit_code == 0, result.output
        assert path.exists()

        result = runner.invoke(cli, ["config", "validate", str(path), "train.epochs=2"])
        assert result.exit_code == 0, result.output
        assert _json(result.output)["train"]["epochs"] == 2

    def test_init_refuses_to_overwrite(self, runner, tmp_path):
        path = tmp_path / "run.yml"
        path.write_text("model: {}\n")
        assert runner.invoke(cli, ["config", "init", str(path)]).exit_code == EXIT_IO
        assert path.read_text() == "model: {}\n"
        assert runner.invoke(cli, ["config", "init", str(path), "--force"]).exit_code == 0
        assert path.read_text() != "model: {}\n"

    def test_invalid_value(self, runner, tmp_path):
        path = tmp_path / "run.yml"
        path.write_text("model:\n  arch: resnet\n")
        result = runner.invoke(cli, ["config", "validate", str(path)])
        assert result.exit_code == EXIT_CONFIG
        assert "model.arch" in result.output

    def test_missing_file(self, runner, tmp_path):
        result = runner.invoke(cli, ["config", "validate", str(tmp_path / "absent.yml")])
        assert result.exit_code == EXIT_IO


class TestGradcheckCommand:
    """Test gradcheck output and exit code."""

    def test_passes(self, runner):
        result = runner.invoke(cli, ["gradcheck", "--model", "edge_kan", "--deactivation", "all"])
        assert result.exit_code == 0, result.output
        report = _json(result.output)
        assert report["passed"] is True
        assert report["deactivation"] == "all"

    def test_fails_on_wrong_gradient(self, runner, monkeypatch):
        original = kan.kan_backward

        def negated(layer, cache, grad_output):
            grads = original(layer, cache, grad_output)
            grads["w_b"] = -grads["w_b"]
            return grads

        monkeypatch.setattr(kan, "kan_backward", negated)
        result = runner.invoke(cli, ["gradcheck", "--model", "edge_kan"])
        assert result.exit_code == EXIT_GRADCHECK
        assert _json(result.output)["passed"] is False

    def test_unknown_model(self, runner):
        assert runner.invoke(cli, ["gradcheck", "--model", "resnet"]).exit_code == 2


class TestDataVerify:
    """Test the CIFAR directory check."""

    def test_valid(self, runner, cifar10_dir):
        result = runner.invoke(cli, ["data", "verify", str(cifar10_dir)])
        assert result.exit_code == 0, result.output
        report = _json(result.output)
        assert report["variant"] == "cifar10"
        assert report["histograms"]["test"] == [2] * 10

    def test_empty_directory(self, runner, tmp_path):
        result = runner.invoke(cli, ["data", "verify", str(tmp_path)])
        assert result.exit_code == EXIT_IO
        assert _json(result.output)["ok"] is False


class TestTrainAndEval:
    """Test training a small model and evaluating its checkpoint."""

    def test_train_then_eval(self, runner, tmp_path):
        run_dir = tmp_path / "edge"
        result = runner.invoke(cli, ["train", "--output", str(run_dir)] + EDGE_OVERRIDES)
        assert result.exit_code == 0, result.output
        for name in ("checkpoint.kant", "records.csv", "steps.csv", "metadata.json", "config.json"):
            assert (run_dir / name).exists(), name
        fingerprint = json.loads((run_dir / "metadata.json").read_text())["fingerprint"]
        assert {record.fingerprint for record in read_records(run_dir / "records.csv")} == {fingerprint}
        trained = _json(result.output)

        result = runner.invoke(cli, ["eval", "--checkpoint", str(run_dir / "checkpoint.kant")])
        assert result.exit_code == 0, result.output
        evaluated = _json(result.output)
        assert evaluated["samples"] == 16
        assert evaluated["dataset"] == "edge_left"
        assert evaluated["accuracy"] == pytest.approx(trained["test_accuracy"])

    def test_missing_data(self, runner, tmp_path, monkeypatch):
        monkeypatch.delenv("KAN_VISION_DATA_DIR", raising=False)
        result = runner.invoke(cli, ["train", "--output", str(tmp_path / "run"), "model.arch=cnn_kan"])
        assert result.exit_code == EXIT_IO

    def test_bad_override(self, runner, tmp_path):
        result = runner.invoke(cli, ["train", "--output", str(tmp_path / "run"), "epochs=3"])
        assert result.exit_code == EXIT_CONFIG

    def test_divergence(self, runner, tmp_path, monkeypatch):
        def diverge(*args, **kwargs):
            raise DivergenceError(1, 2, {"data_loss": float("inf")})

        monkeypatch.setattr(cli_module, "train", diverge)
        result = runner.invoke(cli, ["train", "--output", str(tmp_path / "run")] + EDGE_OVERRIDES)
        assert result.exit_code == EXIT_DIVERGENCE
        assert "epoch 1, step 2" in result.output


def _tiny_edge_grid(base, scale):
    config = RunConfig(
        model=ModelSpec(num_classes=2),
        train=TrainConfig(epochs=2, batch_size=None, lr=0.01),
        data=DataConfig(dataset="edge_right"),
        output=base.output,
    )
    return [presets._cell("exp_edge", "right", "KAN", "right", config, "edge_kan")]


class TestExperimentCommand:
    """Test running a preset from the command line."""

    def test_runs_and_writes(self, runner, tmp_path, monkeypatch):
        monkeypatch.setitem(presets.PRESETS, "exp_edge", _tiny_edge_grid)
        output = tmp_path / "exp_edge"
        result = runner.invoke(cli, ["experiment", "--preset", "exp_edge", "--seeds", "0,1", "--workers", "1", "--progress", "none", "--output", str(output)])
        assert result.exit_code == 0, result.output
        assert (output / "records.csv").exists()
        assert json.loads((output / "summary.json").read_text())["exp_edge/right"]["right"]["KAN"]["n_seeds"] == 2

    @pytest.mark.parametrize("seeds", [["--seeds", "0,0"], ["--seeds", "a,b"], ["--seeds=-1"]])
    def test_invalid_seeds(self, runner, seeds):
        result = runner.invoke(cli, ["experiment", "--preset", "exp_edge"] + seeds)
        assert result.exit_code == EXIT_CONFIG

    def test_invalid_workers(self, runner):
        assert runner.invoke(cli, ["experiment", "--preset", "exp_edge", "--workers", "0"]).exit_code == EXIT_CONFIG

    def test_missing_cifar(self, runner, tmp_path, monkeypatch):
        monkeypatch.delenv("KAN_VISION_DATA_DIR", raising=False)
        result = runner.invoke(cli, ["experiment", "--preset", "exp1", "--seeds", "0", "--workers", "1", "--progress", "none", "--output", str(tmp_path / "out")])
        assert result.exit_code == EXIT_IO


def test_parse_seeds():
    assert parse_seeds("0, 1,2") == [0, 1, 2]
    with pytest.raises(ConfigError):
        parse_seeds("")


def test_version(runner):
    result = runner.invoke(cli, ["--version"])
    assert result.exit_code == 0
    assert __version__ in result.output
