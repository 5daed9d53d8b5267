"""
Experiment records, the mean-over-seeds table view and the CSV / JSON writers.
"""

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

CSV_COLUMNS = ["preset", "cell", "model", "sweep_value", "seed", "epoch", "split", "loss", "accuracy", "wall_ms", "fingerprint"]

STEP_COLUMNS = ["epoch", "step", "data_loss", "smooth", "l1", "total"]

# Summary = {preset -> sweep_value -> model -> {"mean", "sd", "n_seeds"}}
Summary = Dict[str, Dict[str, Dict[str, Dict[str, float]]]]


@dataclass
class Record:
    """One evaluation of one (cell, seed) run at one epoch on one split."""

    preset: str
    cell: str
    model: str
    sweep_value: str
    seed: int
    epoch: int
    split: str
    loss: float
    accuracy: Optional[float]
    wall_ms: float = 0.0
    fingerprint: str = ""

    def row(self) -> List[str]:
        return [
            self.preset,
            self.cell,
            self.model,
            self.sweep_value,
            str(self.seed),
            str(self.epoch),
            self.split,
            repr(float(self.loss)),
            "" if self.accuracy is None else repr(float(self.accuracy)),
            repr(float(self.wall_ms)),
            self.fingerprint,
        ]


@dataclass
class StepLog:
    """Loss accounting of one optimizer step; ``total`` is the sum of the other three."""

    epoch: int
    step: int
    data_loss: float
    smooth: float
    l1: float
    total: float


@dataclass
class ExperimentResult:
    records: List[Record] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)
    steps: List[StepLog] = field(default_factory=list)

    def extend(self, other: "ExperimentResult") -> None:
        self.records.extend(other.records)
        self.steps.extend(other.steps)

    def final_records(self, split: str = "test") -> List[Record]:
        """Last-epoch record of every (cell, model, sweep_value, seed) for ``split``."""
        latest: Dict[tuple, Record] = {}
        for record in self.records:
            if record.split != split:
                continue
            key = (record.preset, record.cell, record.model, record.sweep_value, record.seed)
            if key not in latest or record.epoch >= latest[key].epoch:
                latest[key] = record
        return list(latest.values())

    def table(self, split: str = "test", metric: str = "auto") -> Summary:
        """
        Mean, sample standard deviation and seed count of the final metric per table cell.

        ``metric`` is ``accuracy``, ``loss`` or ``auto`` (accuracy when recorded, else loss).
        Presets with several conditions are keyed ``preset/cell``.
        """
        groups: Dict[str, Dict[str, Dict[str, List[float]]]] = {}
        for record in self.final_records(split):
            preset_key = record.preset if record.cell in ("", "main") else f"{record.preset}/{record.cell}"
            use_accuracy = metric == "accuracy" or (metric == "auto" and record.accuracy is not None)
            value = record.accuracy if use_accuracy else record.loss
            if value is None:
                continue
            groups.setdefault(preset_key, {}).setdefault(record.sweep_value, {}).setdefault(record.model, []).append(float(value))
        summary: Summary = {}
        for preset_key, sweeps in groups.items():
            for sweep_value, models in sweeps.items():
                for model, values in models.items():
                    summary.setdefault(preset_key, {}).setdefault(sweep_value, {})[model] = summarize(values)
        return summary

    def write_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(CSV_COLUMNS)
            for record in self.records:
                writer.writerow(record.row())

    def write_steps(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="") as f:
            writer = csv.writer(f, lineterminator="\n")
            writer.writerow(STEP_COLUMNS)
            for step in self.steps:
                writer.writerow([step.epoch, step.step, repr(step.data_loss), repr(step.smooth), repr(step.l1), repr(step.total)])

    def write_summary(self, path: Union[str, Path], split: str = "test") -> None:
        write_json(path, self.table(split))

    def write_metadata(self, path: Union[str, Path]) -> None:
        write_json(path, self.metadata)


def summarize(values: List[float]) -> Dict[str, float]:
    n = len(values)
    mean = math.fsum(values) / n
    sd = math.sqrt(math.fsum((v - mean) ** 2 for v in values) / (n - 1)) if n > 1 else 0.0
    return {"mean": mean, "sd": sd, "n_seeds": n}


def read_records(path: Union[str, Path]) -> List[Record]:
    """Parse a records CSV written by ``ExperimentResult.write_csv``."""
    records = []
    with open(path, newline="") as f:
        for row in csv.DictReader(f):
            records.append(
                Record(
                    preset=row["preset"],
                    cell=row["cell"],
                    model=row["model"],
                    sweep_value=row["sweep_value"],
                    seed=int(row["seed"]),
                    epoch=int(row["epoch"]),
                    split=row["split"],
                    loss=float(row["loss"]),
                    accuracy=float(row["accuracy"]) if row["accuracy"] else None,
                    wall_ms=float(row["wall_ms"]),
                    fingerprint=row.get("fingerprint") or "",
                )
            )
    return records


def write_json(path: Union[str, Path], document: Any) -> None:
    with open(path, "w") as f:
        json.dump(document, f, indent=2, sort_keys=True)
        f.write("\n")

