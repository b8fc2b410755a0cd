"""
Semantic filtering of keypoint matches for panoramic visual odometry.

A match between frames A and B is kept only when both of its points carry the
same semantic label in the folded-back (raw annular) segmentation of their
frame. Points on ignore pixels or outside the frame are rejected.
"""

import json
import logging
import math
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import yaml
from pydantic import BaseModel, ConfigDict, ValidationError

from .errors import DataError, OutOfFrameError
from .labels import SegmentationMap

logger = logging.getLogger(__name__)

MATCHES_VERSION = 1
OUT_OF_FRAME = "out-of-frame"
DEFAULT_MIN_INLIERS = 8


class Match(BaseModel):
    """A keypoint correspondence in raw annular pixel coordinates."""

    model_config = ConfigDict(frozen=True)

    xa: float
    ya: float
    xb: float
    yb: float
    score: float = 0.0

    @property
    def point_a(self) -> Tuple[float, float]:
        return self.xa, self.ya

    @property
    def point_b(self) -> Tuple[float, float]:
        return self.xb, self.yb


class FilterReport(BaseModel):
    version: int = MATCHES_VERSION
    total: int
    kept: int
    rejected: int
    rejections: Dict[str, int] = {}
    out_of_frame: int = 0
    kept_ratio: Optional[float] = None
    sparse: bool = False


def label_at(seg: SegmentationMap, point: Tuple[float, float]) -> int:
    """
    Class id of the pixel nearest to ``point`` = (x, y).

    Pixel centres sit on integer coordinates; a point exactly halfway between
    two centres takes the lower index.

    Raises:
        OutOfFrameError: the nearest pixel lies outside the map
    """
    x, y = point
    if not (math.isfinite(x) and math.isfinite(y)):
        raise OutOfFrameError(f"Point {point} is not finite")
    col = math.ceil(x - 0.5)
    row = math.ceil(y - 0.5)
    if not (0 <= col < seg.width and 0 <= row < seg.height):
        raise OutOfFrameError(f"Point {point} outside the {seg.width}x{seg.height} map")
    return int(seg.ids[row, col])


def filter_matches(
    matches: Sequence[Match],
    seg_a: SegmentationMap,
    seg_b: SegmentationMap,
    ignore_id: Optional[int] = None,
    label_groups: Optional[Dict[int, int]] = None,
    min_inliers: int = DEFAULT_MIN_INLIERS,
) -> Tuple[List[Match], FilterReport]:
    """
    Keep the matches whose two points agree semantically.

    Args:
        matches: correspondences from frame A to frame B
        seg_a: class-id map of frame A in raw annular coordinates
        seg_b: class-id map of frame B in raw annular coordinates
        ignore_id: label never accepted (defaults to seg_a's ignore id)
        label_groups: optional id -> group id, compared instead of the raw ids
        min_inliers: fewer kept matches than this marks the result sparse

    Returns:
        (kept, report): kept matches in input order and the rejection tally
        keyed "label_a-label_b" (plus "out-of-frame")
    """
    ignore = seg_a.ignore_id if ignore_id is None else ignore_id
    groups = label_groups or {}
    kept: List[Match] = []
    rejections: Dict[str, int] = {}
    out_of_frame = 0
    for match in matches:
        try:
            a = label_at(seg_a, match.point_a)
            b = label_at(seg_b, match.point_b)
        except OutOfFrameError:
            out_of_frame += 1
            rejections[OUT_OF_FRAME] = rejections.get(OUT_OF_FRAME, 0) + 1
            continue
        if a != ignore and b != ignore and groups.get(a, a) == groups.get(b, b):
            kept.append(match)
            continue
        key = f"{a}-{b}"
        rejections[key] = rejections.get(key, 0) + 1

    total = len(matches)
    sparse = len(kept) < min_inliers
    report = FilterReport(
        total=total,
        kept=len(kept),
        rejected=total - len(kept),
        rejections=dict(sorted(rejections.items())),
        out_of_frame=out_of_frame,
        kept_ratio=len(kept) / total if total else None,
        sparse=sparse,
    )
    if sparse:
        logger.warning(f"Only {len(kept)} of {total} matches are semantically consistent (< {min_inliers})")
    else:
        logger.info(f"Kept {len(kept)} of {total} matches")
    return kept, report


def parse_matches(data) -> List[Match]:
    if isinstance(data, dict):
        version = data.get("version", MATCHES_VERSION)
        if version != MATCHES_VERSION:
            raise DataError(f"Unsupported matches version {version}")
        data = data.get("matches")
    if not isinstance(data, list):
        raise DataError("Matches must be a JSON array of {xa, ya, xb, yb, score} objects")
    try:
        return [Match.model_validate(item) for item in data]
    except ValidationError as e:
        raise DataError(f"Invalid match entry: {e}") from e


def load_matches(path: Union[str, Path]) -> List[Match]:
    """Read a matches file: an array of matches or ``{"version": 1, "matches": [...]}``."""
    path = Path(path)
    if not path.is_file():
        raise DataError(f"Matches file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise DataError(f"Matches file {path} is not valid JSON: {e}") from e
    return parse_matches(data)


def dump_filter_result(path: Union[str, Path], kept: Sequence[Match], report: FilterReport) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    document = {
        "version": MATCHES_VERSION,
        "matches": [m.model_dump() for m in kept],
        "report": report.model_dump(),
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(document, f, indent=2)

