"""
Annular image <-> panorama resampling.

The raw annular image holds a 360 degree ring around (center_x, center_y).
Unfolding maps panorama column j to the azimuth

    theta_j = azimuth_offset + 2*pi*j / out_width

and panorama row i to the normalised ring coordinate v = i / (out_height - 1),
which the camera model turns into a radius r(v). Row 0 is the outer radius
unless the model sets ``invert_rows``. The panorama is horizontally periodic by
construction: column ``out_width`` would be the same ray as column 0.
"""

import json
import logging
import math
from pathlib import Path
from typing import List, Literal, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from scipy import ndimage

from .errors import ConfigError, InvalidInputError

logger = logging.getLogger(__name__)

IMAGE_FILL = 0.0
LABEL_IGNORE = 255

# integer column phases closer than this snap to the exact integer so that
# azimuth offsets of whole columns reproduce identical rays
_PHASE_SNAP = 1e-9
_INVERSE_TABLE_SIZE = 4097


class AnnularCameraModel(BaseModel):
    """Geometry of the annular lens image."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    version: int = 1
    center_x: float
    center_y: float
    r_inner: float
    r_outer: float
    source_width: int = Field(gt=0)
    source_height: int = Field(gt=0)
    radial_poly: Optional[List[float]] = None
    azimuth_offset: float = 0.0
    invert_rows: bool = False

    @field_validator("center_x", "center_y", "r_inner", "r_outer", "azimuth_offset")
    @classmethod
    def _finite(cls, value: float) -> float:
        if not math.isfinite(value):
            raise ValueError("must be finite")
        return value

    @field_validator("radial_poly")
    @classmethod
    def _poly(cls, value: Optional[List[float]]) -> Optional[List[float]]:
        if value is None:
            return value
        if not 1 <= len(value) <= 5:
            raise ValueError("radial_poly holds 1 to 5 coefficients a0..a4")
        if not all(math.isfinite(a) for a in value):
            raise ValueError("radial_poly coefficients must be finite")
        return value

    @model_validator(mode="after")
    def _radii(self) -> "AnnularCameraModel":
        if not 0 <= self.r_inner < self.r_outer:
            raise ValueError(f"require 0 <= r_inner < r_outer, got {self.r_inner}, {self.r_outer}")
        return self

    def radius(self, v: np.ndarray) -> np.ndarray:
        """Radius in pixels for normalised ring coordinate(s) v in [0, 1]."""
        v = np.asarray(v, dtype=np.float64)
        if self.invert_rows:
            v = 1.0 - v
        if self.radial_poly is None:
            return self.r_outer - v * (self.r_outer - self.r_inner)
        return np.polynomial.polynomial.polyval(v, self.radial_poly)

    def ring_coordinate(self, r: np.ndarray) -> np.ndarray:
        """
        Invert :meth:`radius`: map radii to v in [0, 1] (NaN outside the ring).

        The polynomial mapping is inverted numerically and must be monotone on [0, 1].
        """
        r = np.asarray(r, dtype=np.float64)
        if self.radial_poly is None:
            v = (self.r_outer - r) / (self.r_outer - self.r_inner)
        else:
            table_v = np.linspace(0.0, 1.0, _INVERSE_TABLE_SIZE)
            table_r = np.polynomial.polynomial.polyval(table_v, self.radial_poly)
            steps = np.diff(table_r)
            if np.all(steps < 0):
                table_v, table_r = table_v[::-1], table_r[::-1]
            elif not np.all(steps > 0):
                raise InvalidInputError("radial_poly must be strictly monotone on [0, 1] to fold back")
            v = np.interp(r, table_r, table_v, left=np.nan, right=np.nan)
        v = np.where((v >= 0.0) & (v <= 1.0), v, np.nan)
        if self.invert_rows:
            v = 1.0 - v
        return v

    def check(self) -> None:
        """Re-validate a model that may have been built without validation."""
        try:
            AnnularCameraModel.model_validate(self.model_dump())
        except ValidationError as e:
            raise InvalidInputError(f"Invalid camera model: {e}") from e


def load_camera_model(path: Union[str, Path]) -> AnnularCameraModel:
    """Load a camera model JSON file."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Camera model file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = json.load(f)
        return AnnularCameraModel.model_validate(data)
    except json.JSONDecodeError as e:
        raise ConfigError(f"Camera model {path} is not valid JSON: {e}") from e
    except ValidationError as e:
        raise ConfigError(f"Camera model {path} is invalid: {e}") from e


def _check_source(annular: np.ndarray, model: AnnularCameraModel) -> None:
    if annular.ndim != 3:
        raise InvalidInputError(f"Expected a channels x height x width raster, got shape {annular.shape}")
    if annular.shape[1:] != (model.source_height, model.source_width):
        raise InvalidInputError(
            f"Annular raster is {annular.shape[2]}x{annular.shape[1]}, "
            f"camera model expects {model.source_width}x{model.source_height}"
        )


def _azimuths(model: AnnularCameraModel, out_width: int) -> np.ndarray:
    phase = np.arange(out_width, dtype=np.float64) + model.azimuth_offset * out_width / (2.0 * math.pi)
    nearest = np.rint(phase)
    phase = np.where(np.abs(phase - nearest) < _PHASE_SNAP, nearest, phase)
    return 2.0 * math.pi * np.mod(phase, out_width) / out_width


def sample_grid(model: AnnularCameraModel, out_width: int, out_height: int):
    """Source (x, y) coordinates sampled by every panorama pixel, each of shape out_height x out_width."""
    theta = _azimuths(model, out_width)
    if out_height == 1:
        v = np.zeros(1)
    else:
        v = np.arange(out_height, dtype=np.float64) / (out_height - 1)
    r = model.radius(v)
    xs = model.center_x + r[:, None] * np.cos(theta)[None, :]
    ys = model.center_y + r[:, None] * np.sin(theta)[None, :]
    return xs, ys


def unfold(
    annular: np.ndarray,
    model: AnnularCameraModel,
    out_width: int,
    out_height: int,
    fill: float = IMAGE_FILL,
) -> np.ndarray:
    """
    Unfold an annular raster into a horizontally periodic panorama.

    Args:
        annular: channels x source_height x source_width raster
        model: camera model describing the ring
        out_width: panorama width (>= 2)
        out_height: panorama height (>= 1)
        fill: value for samples falling outside the source image

    Returns:
        np.ndarray: float32 raster of shape channels x out_height x out_width
    """
    if out_width < 2 or out_height < 1:
        raise InvalidInputError(f"Panorama must be at least 2x1, got {out_width}x{out_height}")
    model.check()
    _check_source(annular, model)
    xs, ys = sample_grid(model, out_width, out_height)
    coords = np.stack([ys, xs])
    out = np.empty((annular.shape[0], out_height, out_width), dtype=np.float32)
    for c in range(annular.shape[0]):
        out[c] = ndimage.map_coordinates(
            np.asarray(annular[c], dtype=np.float64), coords, order=1, mode="constant", cval=fill
        )
    logger.debug(f"Unfolded {model.source_width}x{model.source_height} ring to {out_width}x{out_height}")
    return out


def polar_coordinates(model: AnnularCameraModel, width: int, height: int):
    """
    Panorama coordinates of every annular pixel.

    Returns:
        (cols, rows, inside): continuous panorama column (in [0, width)) and row
        (in [0, height - 1]) per source pixel, and the mask of pixels inside the ring
    """
    ys, xs = np.mgrid[0 : model.source_height, 0 : model.source_width].astype(np.float64)
    dx = xs - model.center_x
    dy = ys - model.center_y
    r = np.hypot(dx, dy)
    theta = np.mod(np.arctan2(dy, dx) - model.azimuth_offset, 2.0 * math.pi)
    cols = np.mod(theta * width / (2.0 * math.pi), width)
    inside = (r >= model.r_inner) & (r <= model.r_outer)
    v = model.ring_coordinate(np.where(inside, r, model.r_outer))
    inside &= np.isfinite(v)
    rows = np.where(inside, v, 0.0) * max(height - 1, 0)
    return cols, rows, inside


def fold_back(
    panorama: np.ndarray,
    model: AnnularCameraModel,
    mode: Literal["nearest", "bilinear"] = "nearest",
    ignore_value: Optional[float] = None,
) -> np.ndarray:
    """
    Project a panorama back onto raw annular coordinates.

    Class-id rasters (integer dtype) must use ``nearest``: ids are nominal.
    Pixels outside the ring receive ``ignore_value`` (255 for integer rasters,
    0 for real rasters when not given).
    """
    if mode not in ("nearest", "bilinear"):
        raise InvalidInputError(f"Unknown fold-back mode {mode!r}")
    if panorama.ndim != 3 or panorama.shape[1] < 2 or panorama.shape[2] < 2:
        raise InvalidInputError(f"Panorama must be channels x H x W with H, W >= 2, got {panorama.shape}")
    is_labels = np.issubdtype(panorama.dtype, np.integer)
    if is_labels and mode == "bilinear":
        raise InvalidInputError("Class-id rasters cannot be folded back with bilinear interpolation")
    model.check()
    if ignore_value is None:
        ignore_value = LABEL_IGNORE if is_labels else IMAGE_FILL

    channels, height, width = panorama.shape
    cols, rows, inside = polar_coordinates(model, width, height)
    out = np.full((channels, model.source_height, model.source_width), ignore_value, dtype=panorama.dtype)

    if mode == "nearest":
        # pixel centres sit on integer coordinates; ties go to the lower index
        col_idx = np.mod(np.ceil(cols - 0.5).astype(np.int64), width)
        row_idx = np.clip(np.ceil(rows - 0.5).astype(np.int64), 0, height - 1)
        out[:, inside] = panorama[:, row_idx[inside], col_idx[inside]]
        return out

    wrapped = np.concatenate([panorama, panorama[:, :, :1]], axis=2).astype(np.float64)
    coords = np.stack([rows[inside], cols[inside]])
    for c in range(channels):
        out[c, inside] = ndimage.map_coordinates(wrapped[c], coords, order=1, mode="nearest")
    return out


def ring_mask(model: AnnularCameraModel, margin: float = 0.0) -> np.ndarray:
    """Boolean mask of source pixels with r_inner + margin <= r <= r_outer - margin."""
    ys, xs = np.mgrid[0 : model.source_height, 0 : model.source_width].astype(np.float64)
    r = np.hypot(xs - model.center_x, ys - model.center_y)
    return (r >= model.r_inner + margin) & (r <= model.r_outer - margin)


def psnr(reference: np.ndarray, estimate: np.ndarray, mask: Optional[np.ndarray] = None, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB, optionally restricted to a spatial mask."""
    if reference.shape != estimate.shape:
        raise InvalidInputError(f"Shape mismatch {reference.shape} vs {estimate.shape}")
    diff = np.asarray(reference, dtype=np.float64) - np.asarray(estimate, dtype=np.float64)
    if mask is not None:
        diff = diff[..., mask]
    mse = float(np.mean(diff**2)) if diff.size else 0.0
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak**2 / mse)
