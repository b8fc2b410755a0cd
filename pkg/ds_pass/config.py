"""
Pipeline configuration.

Config files are JSON (YAML is accepted too). Relative paths are resolved
against the directory of the config file. Example::

    {
      "version": 1,
      "camera_model": "camera_example.json",
      "seed": 42,
      "network": {"num_classes": 27},
      "num_segments": 4,
      "overlap": 0,
      "padding_mode": "ring",
      "segment_padding": "neighbor",
      "class_map": "pass_classes.json",
      "panorama_size": [2048, 704]
    }
"""

import logging
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError
from .swaftnet import FromWeights, Network, NetworkDef, SeededRandom, build, load_weights

logger = logging.getLogger(__name__)

CONFIG_VERSION = 1
DEFAULT_SEED = 0

_PATH_FIELDS = ("camera_model", "weights", "class_map", "output_dir")


class PipelineConfig(BaseModel):
    """Everything an inference run needs besides its input image."""

    model_config = ConfigDict(extra="forbid")

    version: int = CONFIG_VERSION
    camera_model: Optional[Path] = None
    weights: Optional[Path] = None
    seed: Optional[int] = None
    network: Dict[str, Any] = Field(default_factory=dict)
    num_segments: int = Field(default=4, ge=1)
    overlap: int = Field(default=0, ge=0)
    padding_mode: Literal["ring", "zero"] = "ring"
    segment_padding: Literal["neighbor", "zero"] = "neighbor"
    resize_to: Optional[Tuple[int, int]] = None
    split_point: Literal["after_spp"] = "after_spp"
    class_map: Optional[Path] = None
    output_dir: Optional[Path] = None
    panorama_size: Optional[Tuple[int, int]] = None
    threads: Optional[int] = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check(self) -> "PipelineConfig":
        if self.version != CONFIG_VERSION:
            raise ValueError(f"unsupported config version {self.version}")
        if self.seed is not None and self.weights is not None:
            raise ValueError("seed and weights are mutually exclusive")
        return self

    @property
    def effective_seed(self) -> int:
        return DEFAULT_SEED if self.seed is None else self.seed

    def resolve(self, base_dir: Path) -> "PipelineConfig":
        """Copy with relative paths anchored at ``base_dir``."""
        updates = {}
        for name in _PATH_FIELDS:
            value = getattr(self, name)
            if value is not None and not value.is_absolute():
                updates[name] = base_dir / value
        return self.model_copy(update=updates)

    def output_path(self, path: Union[str, Path]) -> Path:
        """Relative output paths land under ``output_dir`` when one is configured."""
        path = Path(path)
        if self.output_dir is None or path.is_absolute():
            return path
        return self.output_dir / path

    def check_files(self) -> None:
        for name in ("camera_model", "weights", "class_map"):
            value = getattr(self, name)
            if value is not None and not value.is_file():
                raise ConfigError(f"{name} file not found: {value}")

    def with_overrides(self, **overrides: Any) -> "PipelineConfig":
        """Apply command-line overrides; None values leave the config untouched."""
        updates = {k: v for k, v in overrides.items() if v is not None}
        if "seed" in updates:
            updates["weights"] = None
        try:
            return PipelineConfig.model_validate({**self.model_dump(), **updates})
        except ValidationError as e:
            raise ConfigError(f"Invalid override: {e}") from e

    def network_def(self) -> NetworkDef:
        try:
            return NetworkDef(**{**self.network, "split_point": self.split_point})
        except (ValidationError, TypeError) as e:
            raise ConfigError(f"Invalid network settings: {e}") from e


def load_pipeline_config(path: Union[str, Path], check_files: bool = True) -> PipelineConfig:
    """
    Load and validate a pipeline config file.

    Args:
        path: JSON or YAML file
        check_files: verify that referenced input files exist

    Returns:
        PipelineConfig: with paths resolved against the file's directory

    Raises:
        ConfigError: missing or malformed file, invalid fields, missing referenced files
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"Config {path} is not valid JSON/YAML: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config {path} must hold an object")
    try:
        config = PipelineConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Config {path} is invalid: {e}") from e
    config = config.resolve(path.parent)
    if check_files:
        config.check_files()
    logger.debug(f"Loaded pipeline config {path}")
    return config


def build_network(config: PipelineConfig) -> Network:
    """Network from the config's weight container, or seeded random parameters."""
    definition = config.network_def()
    if config.weights is not None:
        weights = load_weights(config.weights, definition)
        return build(definition, FromWeights(weights))
    logger.info(f"Using seeded random weights (seed {config.effective_seed})")
    return build(definition, SeededRandom(config.effective_seed))
