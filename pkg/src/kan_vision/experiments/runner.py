"""
Experiment grid runner.

Every (cell, seed) pair of a preset is an independent job. Jobs run in a process pool whose
workers receive the loaded data pools once, through the pool initializer. Results are put back
in grid order before they are written, so the records CSV does not depend on scheduling.
"""

import concurrent.futures
import logging
import os
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

from .. import __version__
from ..config import RunConfig
from .pipeline import NOISE_POLICY, DataPool, load_pool, pool_key, prepare_run
from .presets import GridCell, build_grid
from .progress import CellProgress, ProgressReporter, create_progress_reporter
from .results import ExperimentResult, write_json
from .training import RunLabel, train

logger = logging.getLogger(__name__)

DESK_SEEDS = (0, 1, 2, 3, 4)

_WORKER_POOLS: Dict[Tuple, DataPool] = {}


@dataclass
class CellJob:
    index: int
    cell: GridCell
    seed: int

    @property
    def config(self) -> RunConfig:
        return replace(self.cell.config, train=replace(self.cell.config.train, seed=self.seed))


@dataclass
class CellOutcome:
    index: int
    seed: int
    result: ExperimentResult


def _init_worker(pools: Dict[Tuple, DataPool]) -> None:
    _WORKER_POOLS.clear()
    _WORKER_POOLS.update(pools)


def run_cell(job: CellJob, pools: Optional[Dict[Tuple, DataPool]] = None) -> CellOutcome:
    """Train one (cell, seed) job and return its records."""
    config = job.config
    pools = _WORKER_POOLS if pools is None else pools
    train_data, test_data = prepare_run(config, pools.get(pool_key(config)))
    label = RunLabel(preset=job.cell.preset, cell=job.cell.cell, model=job.cell.model, sweep_value=job.cell.sweep_value, seed=job.seed, fingerprint=job.cell.config.fingerprint())
    _, result = train(config.model, train_data, test_data, config.train, label, record_timing=config.output.record_timing)
    return CellOutcome(index=job.index, seed=job.seed, result=result)


def _progress(job: CellJob, outcome: CellOutcome) -> CellProgress:
    final = [record for record in outcome.result.final_records("test")]
    metric_name = "accuracy" if final and final[-1].accuracy is not None else "loss"
    metric = None
    if final:
        metric = final[-1].accuracy if metric_name == "accuracy" else final[-1].loss
    return CellProgress(label=job.cell.key, seed=job.seed, metric_name=metric_name, metric=metric)


class ExperimentRunner:
    """Expands a preset into jobs, runs them and collects the records."""

    def __init__(
        self,
        preset: str,
        scale: str = "desk",
        seeds: Sequence[int] = DESK_SEEDS,
        workers: Optional[int] = None,
        base: Optional[RunConfig] = None,
        progress_reporter: Optional[ProgressReporter] = None,
    ):
        if not seeds:
            raise ValueError("at least one seed is required")
        if len(set(seeds)) != len(seeds):
            raise ValueError(f"seeds must be distinct, got {list(seeds)}")
        self.preset = preset
        self.scale = scale
        self.seeds = list(seeds)
        self.base = base or RunConfig()
        self.workers = workers or self.base.output.workers or os.cpu_count() or 1
        self.grid = build_grid(preset, scale, self.base)
        self.progress_reporter = progress_reporter or create_progress_reporter(self.base.output.progress)

    def jobs(self) -> List[CellJob]:
        return [CellJob(index=index, cell=cell, seed=seed) for index, cell in enumerate(self.grid) for seed in self.seeds]

    def load_pools(self) -> Dict[Tuple, DataPool]:
        pools: Dict[Tuple, DataPool] = {}
        for cell in self.grid:
            key = pool_key(cell.config)
            if key not in pools:
                pools[key] = load_pool(cell.config)
        return pools

    def run_parallel(self, jobs: List[CellJob], pools: Dict[Tuple, DataPool]) -> List[CellOutcome]:
        """Run jobs in worker processes."""
        outcomes = []

        with concurrent.futures.ProcessPoolExecutor(max_workers=self.workers, initializer=_init_worker, initargs=(pools,)) as executor:
            future_to_job = {executor.submit(run_cell, job): job for job in jobs}

            for future in concurrent.futures.as_completed(future_to_job):
                outcome = future.result()
                outcomes.append(outcome)
                self.progress_reporter.update(_progress(future_to_job[future], outcome))

        return outcomes

    def run_sequential(self, jobs: List[CellJob], pools: Dict[Tuple, DataPool]) -> List[CellOutcome]:
        """Run jobs one after another in this process."""
        outcomes = []
        for job in jobs:
            outcome = run_cell(job, pools)
            outcomes.append(outcome)
            self.progress_reporter.update(_progress(job, outcome))
        return outcomes

    def run(self) -> ExperimentResult:
        jobs = self.jobs()
        pools = self.load_pools()
        logger.info(f"Running preset {self.preset} at {self.scale} scale: {len(self.grid)} cells x {len(self.seeds)} seeds on {self.workers} worker(s)")

        self.progress_reporter.start(len(jobs), f"Preset {self.preset}")
        try:
            if self.workers > 1 and len(jobs) > 1:
                outcomes = self.run_parallel(jobs, pools)
            else:
                outcomes = self.run_sequential(jobs, pools)
        finally:
            self.progress_reporter.finish()

        outcomes.sort(key=lambda o: (o.index, self.seeds.index(o.seed)))
        result = ExperimentResult()
        for outcome in outcomes:
            result.extend(outcome.result)
        result.metadata = self.metadata()
        return result

    def metadata(self) -> Dict[str, Any]:
        return {
            "preset": self.preset,
            "scale": self.scale,
            "seeds": self.seeds,
            "version": __version__,
            "noise_policy": NOISE_POLICY,
            "base_config": self.base.to_dict(),
            "cells": [{"key": cell.key, "fingerprint": cell.config.fingerprint(), "config": cell.config.to_dict()} for cell in self.grid],
        }


def run_experiment(
    preset: str,
    scale: str = "desk",
    seeds: Sequence[int] = DESK_SEEDS,
    workers: Optional[int] = None,
    base: Optional[RunConfig] = None,
    progress_reporter: Optional[ProgressReporter] = None,
) -> ExperimentResult:
    """
    Run every cell of ``preset`` once per seed.

    Args:
        preset: One of ``preset_names()``
        scale: ``desk`` or ``paper``
        seeds: Distinct run seeds
        workers: Worker processes; 1 runs in this process
        base: Configuration the preset overrides (data directory, output settings, spline sizes)
        progress_reporter: Defaults to the reporter named by ``base.output.progress``

    Returns:
        Records of all runs in grid order, with the resolved grid in the metadata

    Raises:
        MissingDataError: If a CIFAR preset has no data directory or files
        DivergenceError: If any run's loss becomes non-finite
    """
    return ExperimentRunner(preset, scale, seeds, workers, base, progress_reporter).run()


def write_experiment(result: ExperimentResult, output_dir: Union[str, Path]) -> Path:
    """Write records.csv, summary.json and metadata.json into ``output_dir``."""
    output = Path(output_dir)
    output.mkdir(parents=True, exist_ok=True)
    result.write_csv(output / "records.csv")
    result.write_summary(output / "summary.json")
    result.write_metadata(output / "metadata.json")
    if "base_config" in result.metadata:
        write_json(output / "config.json", result.metadata["base_config"])
    logger.info(f"Wrote {len(result.records)} records to {output}")
    return output
