"""
Class tables and segmentation maps.

A class map file is either a JSON array of ``{id, name, color, eval_id?}``
entries or an object::

    {"version": 1, "ignore_id": 255,
     "classes": [{"id": 0, "name": "Road", "color": [128, 64, 128], "eval_id": 1}, ...],
     "eval_classes": [{"id": 0, "name": "Car", "color": [0, 0, 142]}, ...]}

``eval_id`` sends a training id to an evaluation id. When ``eval_classes`` is
absent, evaluation ids refer to entries of ``classes`` itself. Training ids
without an ``eval_id`` are scored as ignore once any remap is configured.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from .errors import ConfigError, DataError, InvalidInputError

logger = logging.getLogger(__name__)

IGNORE_ID = 255


class ClassEntry(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    id: int = Field(ge=0, le=254)
    name: str
    color: Tuple[int, int, int]
    eval_id: Optional[int] = Field(default=None, ge=0, le=254)

    @model_validator(mode="after")
    def _color(self) -> "ClassEntry":
        if any(not 0 <= c <= 255 for c in self.color):
            raise ValueError(f"color of {self.name!r} must be three values in 0..255")
        return self


class ClassMap(BaseModel):
    """Training classes, optional evaluation classes and the ignore id."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    version: int = 1
    ignore_id: int = Field(default=IGNORE_ID, ge=0, le=255)
    classes: List[ClassEntry]
    eval_classes: Optional[List[ClassEntry]] = None

    @model_validator(mode="after")
    def _consistent(self) -> "ClassMap":
        if not self.classes:
            raise ValueError("class map has no classes")
        for table_name, table in (("classes", self.classes), ("eval_classes", self.eval_classes or [])):
            ids = [entry.id for entry in table]
            if len(set(ids)) != len(ids):
                raise ValueError(f"duplicate ids in {table_name}")
            if self.ignore_id in ids:
                raise ValueError(f"ignore_id {self.ignore_id} is also a class id in {table_name}")
        targets = {entry.id for entry in (self.eval_classes if self.eval_classes is not None else self.classes)}
        for entry in self.classes:
            if entry.eval_id is None:
                continue
            if entry.eval_id == self.ignore_id:
                raise ValueError(f"{entry.name!r} remaps onto the ignore id")
            if entry.eval_id not in targets:
                raise ValueError(f"{entry.name!r} remaps to unknown evaluation id {entry.eval_id}")
        return self

    @property
    def has_remap(self) -> bool:
        return self.eval_classes is not None or any(e.eval_id is not None for e in self.classes)

    @property
    def num_classes(self) -> int:
        """Size of the training id range (largest id + 1)."""
        return max(entry.id for entry in self.classes) + 1

    def eval_table(self) -> List[ClassEntry]:
        """Classes scored by evaluation, in id order."""
        if self.eval_classes is not None:
            table = self.eval_classes
        elif self.has_remap:
            targets = {e.eval_id for e in self.classes if e.eval_id is not None}
            table = [e for e in self.classes if e.id in targets]
        else:
            table = self.classes
        return sorted(table, key=lambda e: e.id)

    def eval_size(self) -> int:
        return max(entry.id for entry in self.eval_table()) + 1

    def remap_table(self) -> np.ndarray:
        """256-entry lookup table sending training ids to evaluation ids (ignore when unmapped)."""
        lut = np.full(256, self.ignore_id, dtype=np.uint8)
        if not self.has_remap:
            for entry in self.classes:
                lut[entry.id] = entry.id
            return lut
        for entry in self.classes:
            if entry.eval_id is not None:
                lut[entry.id] = entry.eval_id
        return lut

    def to_eval(self, ids: np.ndarray) -> np.ndarray:
        ids = np.asarray(ids)
        if ids.size and (ids.min() < 0 or ids.max() > 255):
            raise InvalidInputError("Class ids must lie in 0..255")
        return self.remap_table()[ids.astype(np.int64)]

    def palette(self, evaluation: bool = False) -> np.ndarray:
        """256 x 3 uint8 colour table; ignore and unknown ids are black."""
        lut = np.zeros((256, 3), dtype=np.uint8)
        for entry in self.eval_table() if evaluation else self.classes:
            lut[entry.id] = entry.color
        return lut

    def names(self, evaluation: bool = False) -> Dict[int, str]:
        return {e.id: e.name for e in (self.eval_table() if evaluation else self.classes)}

    def known_ids(self, evaluation: bool = False) -> List[int]:
        return [e.id for e in (self.eval_table() if evaluation else self.classes)]

    def class_id(self, name: str) -> int:
        """Training id of a class given its name (case-insensitive) or its numeric id."""
        for entry in self.classes:
            if entry.name.lower() == name.lower():
                return entry.id
        if name.isdigit() and int(name) in self.names():
            return int(name)
        raise InvalidInputError(f"Unknown class {name!r}")


def parse_class_map(data) -> ClassMap:
    if isinstance(data, list):
        data = {"classes": data}
    return ClassMap.model_validate(data)


def load_class_map(path: Union[str, Path]) -> ClassMap:
    """
    Load a class map file (JSON, YAML accepted).

    Raises:
        ConfigError: missing file or invalid content
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Class map file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
        class_map = parse_class_map(data)
    except yaml.YAMLError as e:
        raise ConfigError(f"Class map {path} is not valid JSON/YAML: {e}") from e
    except ValidationError as e:
        raise ConfigError(f"Class map {path} is invalid: {e}") from e
    logger.debug(f"Loaded {len(class_map.classes)} classes from {path}")
    return class_map


@dataclass(frozen=True)
class SegmentationMap:
    """Per-pixel class ids (H x W, uint8) with the class table they refer to."""

    ids: np.ndarray
    class_map: Optional[ClassMap] = None
    ignore_id: int = IGNORE_ID

    def __post_init__(self):
        if self.ids.ndim != 2:
            raise InvalidInputError(f"Segmentation maps are height x width, got shape {self.ids.shape}")
        if self.ids.dtype != np.uint8:
            if self.ids.size and (self.ids.min() < 0 or self.ids.max() > 255):
                raise InvalidInputError("Segmentation ids must lie in 0..255")
            object.__setattr__(self, "ids", self.ids.astype(np.uint8))

    @property
    def height(self) -> int:
        return self.ids.shape[0]

    @property
    def width(self) -> int:
        return self.ids.shape[1]

    @property
    def shape(self) -> Tuple[int, int]:
        return self.ids.shape

    @classmethod
    def from_logits(cls, logits: np.ndarray, class_map: Optional[ClassMap] = None) -> "SegmentationMap":
        if logits.shape[0] > 255:
            raise InvalidInputError(f"{logits.shape[0]} classes do not fit 8-bit ids")
        return cls(np.argmax(logits, axis=0).astype(np.uint8), class_map)

    def check_ids(self, valid: List[int]) -> None:
        """Raise DataError for any id that is neither in ``valid`` nor the ignore id."""
        present = np.unique(self.ids)
        unknown = [int(i) for i in present if int(i) not in valid and int(i) != self.ignore_id]
        if unknown:
            raise DataError(f"Unknown class ids {unknown[:10]} in segmentation map")
