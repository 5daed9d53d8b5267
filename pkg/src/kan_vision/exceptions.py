"""
Exception hierarchy for kan-vision.
"""

from typing import Any, Dict, Optional, Sequence


class KanVisionError(Exception):
    """Base exception for all kan-vision errors."""

    pass


class ShapeMismatchError(KanVisionError, ValueError):
    """Raised when tensor shapes are not conformable for an operation."""

    def __init__(self, operation: str, left: Sequence[int], right: Optional[Sequence[int]] = None, detail: str = ""):
        self.operation = operation
        self.left = tuple(left)
        self.right = tuple(right) if right is not None else None
        message = f"{operation}: shape mismatch {self.left}"
        if self.right is not None:
            message += f" vs {self.right}"
        if detail:
            message += f" ({detail})"
        super().__init__(message)


class StaleCacheError(KanVisionError):
    """Raised when backward is called with a cache that does not belong to the last forward pass."""

    pass


class ConfigError(KanVisionError):
    """Raised when a configuration document is invalid. Carries the offending dotted path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}" if path else message)


class DatasetError(KanVisionError):
    """Raised when a dataset file is truncated or corrupt."""

    pass


class MissingDataError(DatasetError, FileNotFoundError):
    """Raised when dataset files are absent."""

    pass


class DivergenceError(KanVisionError):
    """Raised when the training loss becomes non-finite."""

    def __init__(self, epoch: int, step: int, components: Dict[str, float]):
        self.epoch = epoch
        self.step = step
        self.components = components
        detail = ", ".join(f"{key}={value:.6g}" for key, value in components.items())
        super().__init__(f"Loss became non-finite at epoch {epoch}, step {step}: {detail}")


class GradcheckError(KanVisionError):
    """Raised when an analytic gradient disagrees with finite differences."""

    def __init__(self, report: Any):
        self.report = report
        failed = ", ".join(report.failed_groups())
        super().__init__(f"Gradient check failed for: {failed}")
