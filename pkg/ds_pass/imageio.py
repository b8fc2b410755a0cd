"""
PNG input/output for rasters and class-id maps.

Rasters are numpy arrays laid out channels x height x width. RGB images are
loaded to float32 reals in [0, 1]; class-id maps are 8-bit single-channel.
"""

import logging
from pathlib import Path
from typing import Union

import numpy as np
from PIL import Image

from .errors import DataError

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

LABEL_MODES = ("L", "P")


def _open(path: PathLike) -> Image.Image:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Image file not found: {path}")
    try:
        image = Image.open(path)
        image.load()
    except OSError as e:
        raise DataError(f"Cannot decode image {path}: {e}") from e
    return image


def load_rgb(path: PathLike) -> np.ndarray:
    """Load an 8-bit image as a 3 x H x W float32 raster in [0, 1]."""
    image = _open(path).convert("RGB")
    data = np.asarray(image, dtype=np.float32) / 255.0
    return np.ascontiguousarray(data.transpose(2, 0, 1))


def save_rgb(path: PathLike, raster: np.ndarray) -> None:
    """Write a 3 x H x W (or 1 x H x W) raster with values in [0, 1] as an 8-bit PNG."""
    if raster.ndim != 3 or raster.shape[0] not in (1, 3):
        raise DataError(f"Expected a 1- or 3-channel raster, got shape {raster.shape}")
    pixels = np.clip(np.rint(np.asarray(raster, dtype=np.float64) * 255.0), 0, 255).astype(np.uint8)
    if pixels.shape[0] == 1:
        image = Image.fromarray(pixels[0])
    else:
        image = Image.fromarray(np.ascontiguousarray(pixels.transpose(1, 2, 0)))
    _ensure_parent(path)
    image.save(path, format="PNG")


def load_labels(path: PathLike) -> np.ndarray:
    """
    Load a single-channel 8-bit class-id PNG.

    Args:
        path: PNG file holding one class id per pixel (mode "L" or palette "P")

    Returns:
        np.ndarray: H x W uint8 array of class ids

    Raises:
        DataError: missing file or a label image that is not single-channel
    """
    image = _open(path)
    if image.mode not in LABEL_MODES:
        raise DataError(f"Label image {path} must be single-channel 8-bit, got mode {image.mode}")
    return np.array(image, dtype=np.uint8)


def save_labels(path: PathLike, labels: np.ndarray) -> None:
    if labels.ndim != 2:
        raise DataError(f"Class-id maps are 2-D, got shape {labels.shape}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) > 255:
        raise DataError("Class ids must fit in 8 bits")
    _ensure_parent(path)
    Image.fromarray(labels.astype(np.uint8)).save(path, format="PNG")
    logger.debug(f"Wrote class-id map {path} ({labels.shape[1]}x{labels.shape[0]})")


def _ensure_parent(path: PathLike) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
