#!/usr/bin/env python3
"""
Command-line interface for kan-vision.

Usage:
    kan-vision data verify ~/data/cifar-10-batches-bin
    kan-vision train --config run.yml train.epochs=5 --output runs/demo
    kan-vision eval --checkpoint runs/demo/checkpoint.kant --data ~/data/cifar10
    kan-vision gradcheck --model cnn_kan --deactivation all
    kan-vision experiment --preset exp2 --scale desk --seeds 0,1,2,3,4

Exit codes: 0 success, 1 gradient check failure, 2 invalid configuration, 3 missing or
unreadable files, 4 numerical divergence.
"""

import json
import logging
from dataclasses import asdict, replace
from pathlib import Path
from typing import Any, List, Optional, Tuple

import click

from . import __version__
from .config import ARCHITECTURES, ConfigLoader, DataConfig, RunConfig, create_sample_config
from .data import verify_cifar_dir
from .exceptions import ConfigError, DatasetError, DivergenceError, GradcheckError
from .experiments.gradcheck import DEACTIVATION_MODES, check_model
from .experiments.pipeline import prepare_run
from .experiments.presets import SCALES, preset_names
from .experiments.progress import create_progress_reporter
from .experiments.results import write_json
from .experiments.runner import DESK_SEEDS, run_experiment, write_experiment
from .experiments.training import Checkpoint, RunLabel, evaluate, train

logger = logging.getLogger(__name__)

EXIT_GRADCHECK = 1
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_DIVERGENCE = 4


class KanVisionGroup(click.Group):
    """Click group that turns library exceptions into the documented exit codes."""

    def invoke(self, ctx: click.Context) -> Any:
        try:
            return super().invoke(ctx)
        except ConfigError as e:
            click.echo(f"Configuration error at {e.path or '<document>'}: {e}", err=True)
            ctx.exit(EXIT_CONFIG)
        except DivergenceError as e:
            click.echo(f"Training diverged: {e}", err=True)
            ctx.exit(EXIT_DIVERGENCE)
        except GradcheckError as e:
            click.echo(str(e), err=True)
            ctx.exit(EXIT_GRADCHECK)
        except (DatasetError, OSError) as e:
            click.echo(f"File error: {e}", err=True)
            ctx.exit(EXIT_IO)


def parse_seeds(text: str) -> List[int]:
    """Parse ``a,b,c`` into distinct non-negative integers."""
    try:
        seeds = [int(part) for part in text.split(",") if part.strip()]
    except ValueError as e:
        raise ConfigError("seeds", f"seeds must be comma-separated integers, got {text!r}") from e
    if not seeds or any(seed < 0 for seed in seeds) or len(set(seeds)) != len(seeds):
        raise ConfigError("seeds", f"seeds must be distinct non-negative integers, got {text!r}")
    return seeds


@click.group(cls=KanVisionGroup)
@click.version_option(__version__, prog_name="kan-vision")
@click.option("--verbose", "-v", is_flag=True, help="Log debug messages")
def cli(verbose: bool) -> None:
    """Kolmogorov-Arnold layers for small vision models."""
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format="%(asctime)s %(levelname)s %(name)s: %(message)s")


@cli.group()
def data() -> None:
    """Inspect datasets."""
    pass


@data.command("verify")
@click.argument("directory", type=click.Path(path_type=Path))
def data_verify(directory: Path) -> None:
    """Check a CIFAR binary directory: file sizes and per-class label histograms."""
    report = verify_cifar_dir(directory)
    click.echo(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    if not report.ok:
        raise click.exceptions.Exit(EXIT_IO)


@cli.command("train")
@click.option("--config", "config_path", type=click.Path(path_type=Path), help="JSON or YAML run configuration")
@click.option("--output", "-o", type=click.Path(file_okay=False, path_type=Path), help="Run directory (default: <output.output_dir>/train)")
@click.argument("overrides", nargs=-1)
def train_command(config_path: Optional[Path], output: Optional[Path], overrides: Tuple[str, ...]) -> None:
    """
    Train one model and write its checkpoint and records.

    OVERRIDES are dotted assignments such as train.epochs=5 or model.arch=cnn_kan.
    """
    config = ConfigLoader().load_config(config_path, overrides)
    run_dir = output or Path(config.output.output_dir) / "train"
    logger.info(f"Training {config.model.arch} on {config.data.dataset} into {run_dir}")
    train_data, test_data = prepare_run(config)

    fingerprint = config.fingerprint()
    label = RunLabel(model=config.model.arch, seed=config.train.seed, fingerprint=fingerprint)
    checkpoint, result = train(config.model, train_data, test_data, config.train, label, record_timing=config.output.record_timing)
    checkpoint.metadata["data"] = asdict(config.data)
    checkpoint.metadata["fingerprint"] = fingerprint

    run_dir.mkdir(parents=True, exist_ok=True)
    if config.output.save_checkpoint:
        checkpoint.save(run_dir / "checkpoint.kant")
    result.write_csv(run_dir / "records.csv")
    result.write_steps(run_dir / "steps.csv")
    write_json(run_dir / "metadata.json", {**result.metadata, "fingerprint": fingerprint})
    write_json(run_dir / "config.json", config.to_dict())

    final = result.final_records("test")[-1]
    click.echo(json.dumps({"output": str(run_dir), "test_loss": final.loss, "test_accuracy": final.accuracy}, indent=2))


@cli.command("eval")
@click.option("--checkpoint", "checkpoint_path", required=True, type=click.Path(path_type=Path), help="Checkpoint written by train")
@click.option("--data", "data_dir", type=click.Path(path_type=Path), help="CIFAR directory (not needed for edge and regression checkpoints)")
def eval_command(checkpoint_path: Path, data_dir: Optional[Path]) -> None:
    """Evaluate a checkpoint in inference mode and print loss and accuracy as JSON."""
    checkpoint = Checkpoint.load(checkpoint_path)
    network = checkpoint.restore()
    data_config = DataConfig(**checkpoint.metadata.get("data", {}))
    if data_dir is not None:
        data_config = replace(data_config, data_dir=str(data_dir))
    config = RunConfig(data=data_config)
    if "train" in checkpoint.metadata:
        config = replace(config, train=replace(config.train, seed=checkpoint.metadata["train"].get("seed", 0)))
    _, test_data = prepare_run(config)

    loss, accuracy = evaluate(network, test_data)
    click.echo(json.dumps({"checkpoint": str(checkpoint_path), "dataset": data_config.dataset, "samples": len(test_data), "loss": loss, "accuracy": accuracy}, indent=2))


@cli.command("gradcheck")
@click.option("--model", "arch", required=True, type=click.Choice(list(ARCHITECTURES)), help="Architecture tag")
@click.option("--deactivation", type=click.Choice(list(DEACTIVATION_MODES)), default="none", help="Pin every segment mask to kept (none) or deactivated (all)")
@click.option("--tolerance", type=float, default=1e-5, help="Maximum relative error per parameter group")
@click.option("--seed", type=int, default=0, help="Seed for the tiny model and its batch")
def gradcheck_command(arch: str, deactivation: str, tolerance: float, seed: int) -> None:
    """Compare analytic gradients with central differences on a tiny instance of a model."""
    report = check_model(arch, tolerance=tolerance, deactivation=deactivation, seed=seed, raise_on_failure=False)
    click.echo(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    if not report.passed:
        raise click.exceptions.Exit(EXIT_GRADCHECK)


@cli.command("experiment")
@click.option("--preset", required=True, type=click.Choice(list(preset_names())), help="Experiment grid")
@click.option("--scale", type=click.Choice(list(SCALES)), default="desk", help="desk: reduced data and epochs; paper: full schedules")
@click.option("--seeds", default=",".join(str(s) for s in DESK_SEEDS), help="Comma-separated run seeds")
@click.option("--workers", type=int, help="Worker processes (default: logical cores)")
@click.option("--data-dir", type=click.Path(file_okay=False, path_type=Path), help="CIFAR directory")
@click.option("--output", "-o", type=click.Path(file_okay=False, path_type=Path), help="Result directory (default: <output.output_dir>/<preset>)")
@click.option("--config", "config_path", type=click.Path(path_type=Path), help="Base configuration the preset overrides")
@click.option("--progress", type=click.Choice(["auto", "rich", "tqdm", "simple", "none"]), help="Progress reporter type")
def experiment_command(
    preset: str,
    scale: str,
    seeds: str,
    workers: Optional[int],
    data_dir: Optional[Path],
    output: Optional[Path],
    config_path: Optional[Path],
    progress: Optional[str],
) -> None:
    """Run a preset grid over several seeds and write the records and the mean-over-seeds table."""
    seed_list = parse_seeds(seeds)
    if workers is not None and workers < 1:
        raise ConfigError("workers", f"must be at least 1, got {workers}")
    base = ConfigLoader().load_config(config_path)
    if data_dir is not None:
        base = replace(base, data=replace(base.data, data_dir=str(data_dir)))
    if progress is not None:
        base = replace(base, output=replace(base.output, progress=progress))

    result = run_experiment(preset, scale, seed_list, workers, base, create_progress_reporter(base.output.progress))
    run_dir = write_experiment(result, output or Path(base.output.output_dir) / preset)
    click.echo(json.dumps(result.table(), indent=2, sort_keys=True))
    click.echo(f"Results written to {run_dir}", err=True)


@cli.group("config")
def config_group() -> None:
    """Create and check run configuration files."""
    pass


@config_group.command("init")
@click.argument("path", type=click.Path(dir_okay=False, path_type=Path), default="kan-vision.yml")
@click.option("--force", is_flag=True, help="Overwrite an existing file")
def config_init(path: Path, force: bool) -> None:
    """Write a commented sample configuration."""
    if path.exists() and not force:
        click.echo(f"Configuration file already exists at {path}; pass --force to overwrite", err=True)
        raise click.exceptions.Exit(EXIT_IO)
    path.write_text(create_sample_config())
    click.echo(f"Configuration file created at {path}")


@config_group.command("validate")
@click.argument("path", type=click.Path(dir_okay=False, path_type=Path))
@click.argument("overrides", nargs=-1)
def config_validate(path: Path, overrides: Tuple[str, ...]) -> None:
    """Validate a configuration file and print the resolved document."""
    config = ConfigLoader().load_config(path, overrides)
    click.echo(json.dumps(config.to_dict(), indent=2, sort_keys=True))
    click.echo("Configuration is valid", err=True)


def main() -> None:
    """Main CLI entry point."""
    cli()


if __name__ == "__main__":
    main()
