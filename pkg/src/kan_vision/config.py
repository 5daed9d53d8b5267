"""
Configuration management for kan-vision runs.

A run is described by four sections (model, train, data, output). Values are resolved from,
in increasing precedence: dataclass defaults, a JSON or YAML config file, KAN_VISION_*
environment variables and dotted command-line overrides such as ``train.epochs=5``.
"""

import dataclasses
import hashlib
import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import yaml
from jsonschema import Draft7Validator, ValidationError

from .exceptions import ConfigError

ARCHITECTURES = (
    "cnn_mlp",
    "ckan_cnn_mlp",
    "cnn_kan",
    "cnn_ckan_mlp",
    "ckan_ckan_mlp",
    "edge_kan",
    "edge_kan_deep",
    "edge_linear",
    "ka_theorem",
)

IMAGE_ARCHITECTURES = ("cnn_mlp", "ckan_cnn_mlp", "cnn_kan", "cnn_ckan_mlp", "ckan_ckan_mlp")

DATASETS = ("cifar10", "cifar100", "edge_left", "edge_right", "regression")


@dataclass
class ModelSpec:
    """Architecture tag plus the layer hyperparameters the tag uses."""

    arch: str = "cnn_mlp"
    in_channels: int = 3
    image_size: int = 32
    num_classes: int = 10
    channels: List[int] = field(default_factory=lambda: [32, 64])
    kernel_size: int = 3
    grid_size: int = 5
    spline_order: int = 3
    domain: List[float] = field(default_factory=lambda: [-1.0, 1.0])
    ckan_k: int = 1
    ckan_silu: bool = True
    deactivation_p: float = 0.0
    hidden_width: Optional[int] = None
    input_dim: int = 4

    def validate(self) -> None:
        """Tag-dependent checks the schema cannot express."""
        if self.domain[0] >= self.domain[1]:
            raise ConfigError("model.domain", f"empty spline domain {self.domain}")
        if self.arch in IMAGE_ARCHITECTURES:
            if len(self.channels) != 2:
                raise ConfigError("model.channels", f"{self.arch} needs two convolution widths, got {self.channels}")
            if self.image_size < 4:
                raise ConfigError("model.image_size", f"two 2x2 pooling stages need images of at least 4 pixels, got {self.image_size}")
        if self.arch.startswith("edge") and self.num_classes != 2:
            raise ConfigError("model.num_classes", f"{self.arch} is a two-class model")


@dataclass
class TrainConfig:
    """Optimizer, regularization and data-protocol settings of one training run."""

    epochs: int = 15
    batch_size: Optional[int] = 128  # None trains full-batch
    seed: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lambda_smooth: float = 0.0
    lambda_l1: float = 0.0
    l1_scope: str = "all"
    deactivation_p: Optional[float] = None  # overrides model.deactivation_p when set
    fraction: float = 1.0
    noise: float = 0.0
    eval_every: int = 1


@dataclass
class DataConfig:
    """Where the data comes from and how it is reduced before the per-run protocol applies."""

    dataset: str = "cifar10"
    data_dir: Optional[str] = None
    subset: float = 1.0
    subset_seed: int = 0
    standardize: bool = False
    regression_fn: str = "sin"
    regression_train_n: int = 32
    regression_test_n: int = 512
    regression_noise_sd: float = 0.0
    regression_domain: List[float] = field(default_factory=lambda: [-math.pi, math.pi])


@dataclass
class OutputConfig:
    output_dir: str = "runs"
    record_timing: bool = False
    progress: str = "auto"
    workers: Optional[int] = None
    save_checkpoint: bool = True


@dataclass
class RunConfig:
    """Fully resolved configuration of a run."""

    model: ModelSpec = field(default_factory=ModelSpec)
    train: TrainConfig = field(default_factory=TrainConfig)
    data: DataConfig = field(default_factory=DataConfig)
    output: OutputConfig = field(default_factory=OutputConfig)

    def to_dict(self) -> Dict[str, Any]:
        return dataclasses.asdict(self)

    def fingerprint(self) -> str:
        """Stable hash of the canonical JSON form."""
        return config_fingerprint(self.to_dict())

    @property
    def effective_deactivation_p(self) -> float:
        return self.train.deactivation_p if self.train.deactivation_p is not None else self.model.deactivation_p


def config_fingerprint(document: Dict[str, Any]) -> str:
    canonical = json.dumps(document, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


_NUMBER = {"type": "number"}
_PROBABILITY = {"type": "number", "minimum": 0, "maximum": 1}
_NONNEGATIVE = {"type": "number", "minimum": 0}
_POSITIVE_INT = {"type": "integer", "minimum": 1}
_INTERVAL = {"type": "array", "items": _NUMBER, "minItems": 2, "maxItems": 2}

CONFIG_SCHEMA: Dict[str, Any] = {
    "$schema": "http://json-schema.org/draft-07/schema#",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "model": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "arch": {"enum": list(ARCHITECTURES)},
                "in_channels": _POSITIVE_INT,
                "image_size": _POSITIVE_INT,
                "num_classes": {"type": "integer", "minimum": 1},
                "channels": {"type": "array", "items": _POSITIVE_INT},
                "kernel_size": _POSITIVE_INT,
                "grid_size": _POSITIVE_INT,
                "spline_order": {"type": "integer", "minimum": 1, "maximum": 5},
                "domain": _INTERVAL,
                "ckan_k": _POSITIVE_INT,
                "ckan_silu": {"type": "boolean"},
                "deactivation_p": _PROBABILITY,
                "hidden_width": {"anyOf": [_POSITIVE_INT, {"type": "null"}]},
                "input_dim": _POSITIVE_INT,
            },
        },
        "train": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": {"type": "integer", "minimum": 0},
                "batch_size": {"anyOf": [_POSITIVE_INT, {"type": "null"}]},
                "seed": {"type": "integer", "minimum": 0},
                "lr": {"type": "number", "exclusiveMinimum": 0},
                "beta1": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "beta2": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
                "eps": {"type": "number", "exclusiveMinimum": 0},
                "lambda_smooth": _NONNEGATIVE,
                "lambda_l1": _NONNEGATIVE,
                "l1_scope": {"enum": ["all", "spline"]},
                "deactivation_p": {"anyOf": [_PROBABILITY, {"type": "null"}]},
                "fraction": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "noise": _PROBABILITY,
                "eval_every": _POSITIVE_INT,
            },
        },
        "data": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dataset": {"enum": list(DATASETS)},
                "data_dir": {"type": ["string", "null"]},
                "subset": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "subset_seed": {"type": "integer", "minimum": 0},
                "standardize": {"type": "boolean"},
                "regression_fn": {"enum": ["sin", "square"]},
                "regression_train_n": _POSITIVE_INT,
                "regression_test_n": _POSITIVE_INT,
                "regression_noise_sd": _NONNEGATIVE,
                "regression_domain": _INTERVAL,
            },
        },
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "output_dir": {"type": "string"},
                "record_timing": {"type": "boolean"},
                "progress": {"enum": ["auto", "rich", "tqdm", "simple", "none"]},
                "workers": {"anyOf": [_POSITIVE_INT, {"type": "null"}]},
                "save_checkpoint": {"type": "boolean"},
            },
        },
    },
}

_validator = Draft7Validator(CONFIG_SCHEMA)

ENV_MAPPINGS: Dict[str, Tuple[str, Callable[[str], Any]]] = {
    "KAN_VISION_DATA_DIR": ("data.data_dir", str),
    "KAN_VISION_OUTPUT_DIR": ("output.output_dir", str),
    "KAN_VISION_WORKERS": ("output.workers", int),
}


def _dotted(path: Sequence[Any]) -> str:
    return ".".join(str(part) for part in path)


def _error_path(error: ValidationError) -> str:
    path = list(error.absolute_path)
    if error.validator == "additionalProperties" and isinstance(error.instance, dict):
        known = set(error.schema.get("properties", {}))
        unexpected = sorted(key for key in error.instance if key not in known)
        if unexpected:
            path.append(unexpected[0])
    return _dotted(path)


def validate_document(document: Dict[str, Any]) -> None:
    """Raise ConfigError for the first schema violation, naming its dotted path."""
    errors = sorted(_validator.iter_errors(document), key=lambda e: (_dotted(e.absolute_path), e.message))
    if errors:
        error = errors[0]
        path = _error_path(error)
        if error.validator == "additionalProperties":
            raise ConfigError(path, "unknown configuration key")
        raise ConfigError(path, error.message)


def parse_override(text: str) -> Tuple[str, Any]:
    """Split ``section.field=value``; the value is read as a JSON scalar, else kept as a string."""
    if "=" not in text:
        raise ConfigError(text, "override must look like section.field=value")
    key, raw = text.split("=", 1)
    key = key.strip()
    if key.count(".") != 1:
        raise ConfigError(key, "override key must be section.field")
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def _set_dotted(document: Dict[str, Any], key: str, value: Any) -> None:
    section, name = key.split(".", 1)
    if not isinstance(document.get(section), dict):
        document[section] = {}
    document[section][name] = value


def _deep_merge(base: Dict[str, Any], update: Dict[str, Any]) -> None:
    for key, value in update.items():
        if isinstance(value, dict) and isinstance(base.get(key), dict):
            _deep_merge(base[key], value)
        else:
            base[key] = value


class ConfigLoader:
    """Loads and resolves kan-vision run configuration."""

    def __init__(self, environ: Optional[Dict[str, str]] = None):
        self.environ = os.environ if environ is None else environ

    def load_config(self, path: Optional[Union[str, Path]] = None, overrides: Sequence[str] = ()) -> RunConfig:
        """
        Resolve a RunConfig from defaults, an optional file, the environment and overrides.

        Args:
            path: JSON (.json) or YAML (.yml/.yaml) config file
            overrides: dotted ``section.field=value`` strings

        Returns:
            Validated configuration

        Raises:
            ConfigError: naming the dotted path of the first invalid value
        """
        document = RunConfig().to_dict()
        if path is not None:
            _deep_merge(document, self._load_config_file(Path(path)))
        for key, value in self._load_env_config().items():
            _set_dotted(document, key, value)
        for text in overrides:
            key, value = parse_override(text)
            _set_dotted(document, key, value)
        return self._parse_config_dict(document)

    def _load_config_file(self, path: Path) -> Dict[str, Any]:
        if not path.is_file():
            raise FileNotFoundError(f"Config file not found: {path}")
        text = path.read_text()
        try:
            if path.suffix in (".yml", ".yaml"):
                data = yaml.safe_load(text)
            else:
                data = json.loads(text)
        except (json.JSONDecodeError, yaml.YAMLError) as e:
            raise ConfigError("", f"cannot parse {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError("", f"config file must contain a mapping, got {type(data).__name__}")
        return data

    def _load_env_config(self) -> Dict[str, Any]:
        values: Dict[str, Any] = {}
        for env_key, (dotted, converter) in ENV_MAPPINGS.items():
            if env_key in self.environ:
                try:
                    values[dotted] = converter(self.environ[env_key])
                except ValueError as e:
                    raise ConfigError(dotted, f"invalid value in {env_key}: {e}") from e
        return values

    def _parse_config_dict(self, data: Dict[str, Any]) -> RunConfig:
        validate_document(data)
        config = RunConfig(
            model=ModelSpec(**data.get("model", {})),
            train=TrainConfig(**data.get("train", {})),
            data=DataConfig(**data.get("data", {})),
            output=OutputConfig(**data.get("output", {})),
        )
        config.model.validate()
        if config.data.dataset in ("edge_left", "edge_right") and not config.model.arch.startswith("edge"):
            raise ConfigError("model.arch", f"dataset {config.data.dataset} needs an edge_* architecture")
        return config


def config_from_dict(data: Dict[str, Any]) -> RunConfig:
    """Build a RunConfig from a (possibly partial) document, filling defaults."""
    document = RunConfig().to_dict()
    _deep_merge(document, data)
    return ConfigLoader(environ={})._parse_config_dict(document)


def load_config(path: Optional[Union[str, Path]] = None, overrides: Sequence[str] = ()) -> RunConfig:
    """Load kan-vision configuration."""
    return ConfigLoader().load_config(path, overrides)


def create_sample_config() -> str:
    """Create a sample configuration file content."""
    return """# kan-vision run configuration
# Override any value on the command line, e.g. `kan-vision train --config run.yml train.epochs=5`

model:
  arch: cnn_kan          # cnn_mlp | ckan_cnn_mlp | cnn_kan | cnn_ckan_mlp | ckan_ckan_mlp | edge_kan | edge_kan_deep | edge_linear | ka_theorem
  in_channels: 3
  image_size: 32
  num_classes: 10
  channels: [32, 64]
  kernel_size: 3
  grid_size: 5           # spline intervals G
  spline_order: 3        # spline degree k
  domain: [-1.0, 1.0]
  ckan_k: 1              # spline activations per CKAN channel
  ckan_silu: true
  deactivation_p: 0.0
  hidden_width: null     # set to insert one hidden layer in the head
  input_dim: 4           # edge and ka_theorem models only

train:
  epochs: 15
  batch_size: 128        # null for full-batch
  seed: 0
  lr: 0.001
  beta1: 0.9
  beta2: 0.999
  eps: 1.0e-08
  lambda_smooth: 0.0     # curvature penalty strength
  lambda_l1: 0.0
  l1_scope: all          # all | spline
  deactivation_p: null   # overrides model.deactivation_p when set
  fraction: 1.0          # balanced share of the training pool
  noise: 0.0             # label-noise rate on training labels
  eval_every: 1

data:
  dataset: cifar10       # cifar10 | cifar100 | edge_left | edge_right | regression
  data_dir: null         # or KAN_VISION_DATA_DIR
  subset: 1.0            # balanced pool reduction applied before train.fraction
  subset_seed: 0
  standardize: false
  regression_fn: sin
  regression_train_n: 32
  regression_test_n: 512
  regression_noise_sd: 0.0
  regression_domain: [-3.141592653589793, 3.141592653589793]

output:
  output_dir: runs       # or KAN_VISION_OUTPUT_DIR
  record_timing: false   # wall_ms stays 0 so reruns are byte-identical
  progress: auto         # auto | rich | tqdm | simple | none
  workers: null          # experiment worker pool, default logical core count (or KAN_VISION_WORKERS)
  save_checkpoint: true
"""
