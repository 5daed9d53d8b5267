"""
Progress reporting for experiment grids.

Each finished (cell, seed) run is reported once; rich and tqdm bars are optional.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple, Type

import click


@dataclass
class CellProgress:
    """What a reporter learns about one finished (cell, seed) run."""

    label: str
    seed: int
    metric_name: str
    metric: Optional[float]


class ProgressReporter(ABC):
    """Abstract base class for progress reporting."""

    @abstractmethod
    def start(self, total: int, description: str = "Running grid") -> None:
        """Start progress reporting."""
        pass

    @abstractmethod
    def update(self, progress: CellProgress) -> None:
        """Update progress with a finished run."""
        pass

    @abstractmethod
    def finish(self) -> None:
        """Finish progress reporting."""
        pass


def _describe(progress: CellProgress) -> str:
    metric = "n/a" if progress.metric is None else f"{progress.metric:.4f}"
    return f"{progress.label} seed={progress.seed} {progress.metric_name}={metric}"


class SimpleProgressReporter(ProgressReporter):
    """Simple text-based progress reporter."""

    def __init__(self, verbose: bool = True):
        self.verbose = verbose
        self.total = 0
        self.completed = 0

    def start(self, total: int, description: str = "Running grid") -> None:
        self.total = total
        self.completed = 0
        if self.verbose:
            click.echo(f"\n{description}: {total} runs", err=True)
            click.echo("-" * 50, err=True)

    def update(self, progress: CellProgress) -> None:
        self.completed += 1
        if self.verbose:
            click.echo(f"[{self.completed}/{self.total}] {_describe(progress)}", err=True)

    def finish(self) -> None:
        if self.verbose:
            click.echo("-" * 50, err=True)


class RichProgressReporter(ProgressReporter):
    """Progress reporter using the rich library."""

    def __init__(self) -> None:
        try:
            from rich.console import Console
            from rich.progress import BarColumn, Progress, SpinnerColumn, TextColumn, TimeRemainingColumn

            self.console = Console(stderr=True)
            self.Progress = Progress
            self.columns = (SpinnerColumn(), TextColumn("[progress.description]{task.description}"), BarColumn(), TextColumn("[progress.percentage]{task.percentage:>3.0f}%"), TimeRemainingColumn())
            self.available = True
        except ImportError:
            self.available = False

        self.progress: Optional[Any] = None
        self.task: Optional[Any] = None
        self.finished: List[CellProgress] = []

    def start(self, total: int, description: str = "Running grid") -> None:
        if not self.available:
            return

        self.finished = []
        self.progress = self.Progress(*self.columns, console=self.console)
        self.progress.start()
        self.task = self.progress.add_task(description, total=total)

    def update(self, progress: CellProgress) -> None:
        if not self.available or not self.progress:
            return

        self.finished.append(progress)
        self.progress.update(self.task, advance=1, description=_describe(progress))

    def finish(self) -> None:
        if not self.available or not self.progress:
            return

        self.progress.stop()
        self.console.print(f"Finished {len(self.finished)} runs")


class TqdmProgressReporter(ProgressReporter):
    """Progress reporter using tqdm library."""

    def __init__(self) -> None:
        try:
            from tqdm import tqdm

            self.tqdm = tqdm
            self.available = True
        except ImportError:
            self.available = False

        self.pbar: Optional[Any] = None

    def start(self, total: int, description: str = "Running grid") -> None:
        if not self.available:
            return

        self.pbar = self.tqdm(total=total, desc=description, unit="run", ncols=80)

    def update(self, progress: CellProgress) -> None:
        if not self.available or not self.pbar:
            return

        self.pbar.set_postfix_str(_describe(progress))
        self.pbar.update(1)

    def finish(self) -> None:
        if not self.available or not self.pbar:
            return

        self.pbar.close()


# Bar backends tried in order for each progress setting; the text reporter is the fallback.
GRID_BACKENDS: Dict[str, Tuple[Type[ProgressReporter], ...]] = {
    "auto": (RichProgressReporter, TqdmProgressReporter),
    "rich": (RichProgressReporter,),
    "tqdm": (TqdmProgressReporter,),
    "simple": (),
    "none": (),
}


def create_progress_reporter(reporter_type: str = "auto", verbose: bool = True) -> ProgressReporter:
    """Reporter for a grid run under the ``output.progress`` setting."""
    if reporter_type not in GRID_BACKENDS:
        raise ValueError(f"progress must be one of {sorted(GRID_BACKENDS)}, got {reporter_type!r}")
    for backend in GRID_BACKENDS[reporter_type]:
        reporter = backend()
        if getattr(reporter, "available", False):
            return reporter
    return SimpleProgressReporter(verbose=verbose and reporter_type != "none")
