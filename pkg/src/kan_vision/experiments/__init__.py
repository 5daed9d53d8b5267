"""
Experiment harness: model zoo, training loop, gradient checks and preset grids.
"""

from .gradcheck import GradcheckReport, check_model, gradcheck, tiny_model_spec
from .models import COMPARISON_MODELS, build_model, spline_layers
from .pipeline import DataPool, load_pool, prepare_run
from .presets import GridCell, build_grid, preset_names
from .progress import ProgressReporter, create_progress_reporter
from .results import ExperimentResult, Record, read_records
from .runner import ExperimentRunner, run_experiment, write_experiment
from .training import Checkpoint, RunLabel, Trainer, train

__all__ = [
    "build_model",
    "spline_layers",
    "COMPARISON_MODELS",
    "train",
    "Trainer",
    "Checkpoint",
    "RunLabel",
    "gradcheck",
    "check_model",
    "tiny_model_spec",
    "GradcheckReport",
    "DataPool",
    "load_pool",
    "prepare_run",
    "GridCell",
    "build_grid",
    "preset_names",
    "ExperimentRunner",
    "run_experiment",
    "write_experiment",
    "ExperimentResult",
    "Record",
    "read_records",
    "ProgressReporter",
    "create_progress_reporter",
]
