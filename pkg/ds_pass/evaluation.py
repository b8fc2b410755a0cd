"""
Per-class IoU / mIoU evaluation of panoramic segmentation.

Confusion matrices count ground truth along rows and predictions along
columns. Pixels whose ground truth is the ignore id are not scored. A scored
pixel predicted as the ignore id (including training classes without an
evaluation id) lands in the void column: a miss for its ground-truth class
that no class is credited with. Classes whose IoU denominator is zero are
reported as undefined and left out of the mean.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from .errors import DataError, InvalidInputError, NoScorableClassesError
from .imageio import PathLike, load_labels, load_rgb
from .labels import IGNORE_ID, ClassMap, SegmentationMap

logger = logging.getLogger(__name__)

REPORT_VERSION = 1

# SwaftNet on PASS with segment-wise adaptation, percent IoU
PASS_REFERENCE_IOU: Dict[str, float] = {
    "Car": 93.6,
    "Road": 77.6,
    "Sidewalk": 53.7,
    "Crosswalk": 62.1,
    "Curb": 38.3,
    "Person": 80.7,
}
PASS_REFERENCE_MIOU = 67.7


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray
    ignore_id: int = IGNORE_ID
    void: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.void is None:
            object.__setattr__(self, "void", np.zeros(self.counts.shape[0], dtype=np.int64))

    @classmethod
    def empty(cls, num_classes: int, ignore_id: int = IGNORE_ID) -> "ConfusionMatrix":
        if num_classes < 1:
            raise InvalidInputError(f"Confusion matrices need at least one class, got {num_classes}")
        return cls(np.zeros((num_classes, num_classes), dtype=np.int64), ignore_id)

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        """Scored pixels, void predictions included."""
        return int(self.counts.sum()) + int(self.void.sum())

    def gt_pixels(self, class_id: int) -> int:
        return int(self.counts[class_id, :].sum()) + int(self.void[class_id])

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        if self.counts.shape != other.counts.shape:
            raise InvalidInputError(f"Cannot add confusion matrices {self.counts.shape} and {other.counts.shape}")
        return ConfusionMatrix(self.counts + other.counts, self.ignore_id, self.void + other.void)


def _ids(seg: Union[SegmentationMap, np.ndarray]) -> np.ndarray:
    return seg.ids if isinstance(seg, SegmentationMap) else np.asarray(seg)


def accumulate(
    cm: ConfusionMatrix,
    pred: Union[SegmentationMap, np.ndarray],
    gt: Union[SegmentationMap, np.ndarray],
) -> ConfusionMatrix:
    """
    Add one prediction / ground-truth pair to a confusion matrix.

    Returns:
        ConfusionMatrix: a new matrix; ``cm`` is left untouched

    Raises:
        InvalidInputError: unequal dimensions or an id outside 0..K-1 that is not the ignore id

    Ground-truth ignore pixels are skipped; predictions equal to the ignore id
    count as void, a miss for the ground-truth class.
    """
    p = _ids(pred).astype(np.int64)
    g = _ids(gt).astype(np.int64)
    if p.shape != g.shape:
        raise InvalidInputError(f"Prediction {p.shape} and ground truth {g.shape} differ in size")
    k = cm.num_classes
    labelled = g != cm.ignore_id
    void = labelled & (p == cm.ignore_id)
    scored = labelled & ~void
    for name, ids, mask in (("ground truth", g, labelled), ("prediction", p, scored)):
        bad = mask & ((ids < 0) | (ids >= k))
        if bad.any():
            raise InvalidInputError(f"{name} id {int(ids[bad][0])} outside 0..{k - 1}")
    counts = np.bincount(k * g[scored] + p[scored], minlength=k * k).reshape(k, k)
    missed = np.bincount(g[void], minlength=k)
    return ConfusionMatrix(cm.counts + counts, cm.ignore_id, cm.void + missed)


def iou(cm: ConfusionMatrix, class_id: int) -> Optional[float]:
    """Intersection over union of one class; None when the class never occurs in either map."""
    c = cm.counts
    tp = int(c[class_id, class_id])
    denominator = cm.gt_pixels(class_id) + int(c[:, class_id].sum()) - tp
    if denominator == 0:
        return None
    return tp / denominator


def miou(cm: ConfusionMatrix, classes: Optional[Iterable[int]] = None) -> float:
    """
    Mean IoU over ``classes`` (all classes by default), skipping undefined ones.

    Raises:
        NoScorableClassesError: every requested class is undefined
    """
    subset = list(range(cm.num_classes)) if classes is None else list(classes)
    values = [v for v in (iou(cm, c) for c in subset) if v is not None]
    if not values:
        raise NoScorableClassesError(f"No scorable classes among {subset}")
    return float(np.mean(values))


def pixel_accuracy(cm: ConfusionMatrix) -> Optional[float]:
    total = cm.total
    return float(np.trace(cm.counts)) / total if total else None


class ClassScore(BaseModel):
    id: int
    name: str
    iou: Optional[float] = None
    gt_pixels: int
    pred_pixels: int
    intersection: int
    void_pixels: int = 0


class EvaluationReport(BaseModel):
    version: int = REPORT_VERSION
    images: int = 0
    classes: List[ClassScore]
    miou: float
    pixel_accuracy: Optional[float] = None
    undefined: List[str] = []

    def iou_by_name(self) -> Dict[str, Optional[float]]:
        return {c.name: c.iou for c in self.classes}

    def to_frame(self) -> pd.DataFrame:
        """One row per class plus a final ``mIoU`` row holding the mean and pixel totals."""
        rows = [c.model_dump() for c in self.classes]
        rows.append(
            {
                "id": None,
                "name": "mIoU",
                "iou": self.miou,
                "gt_pixels": sum(c.gt_pixels for c in self.classes),
                "pred_pixels": sum(c.pred_pixels for c in self.classes),
                "intersection": sum(c.intersection for c in self.classes),
                "void_pixels": sum(c.void_pixels for c in self.classes),
            }
        )
        return pd.DataFrame(rows, columns=list(ClassScore.model_fields))

    def to_csv(self, path: PathLike) -> None:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        self.to_frame().to_csv(path, index=False)


def build_report(cm: ConfusionMatrix, names: Dict[int, str], images: int = 0) -> EvaluationReport:
    """Score the classes named in ``names`` (id -> name)."""
    scores = []
    for class_id, name in sorted(names.items()):
        if class_id >= cm.num_classes:
            raise InvalidInputError(f"Class {name!r} (id {class_id}) outside the {cm.num_classes}-class matrix")
        scores.append(
            ClassScore(
                id=class_id,
                name=name,
                iou=iou(cm, class_id),
                gt_pixels=cm.gt_pixels(class_id),
                pred_pixels=int(cm.counts[:, class_id].sum()),
                intersection=int(cm.counts[class_id, class_id]),
                void_pixels=int(cm.void[class_id]),
            )
        )
    return EvaluationReport(
        images=images,
        classes=scores,
        miou=miou(cm, names.keys()),
        pixel_accuracy=pixel_accuracy(cm),
        undefined=[s.name for s in scores if s.iou is None],
    )


class ReportComparison(BaseModel):
    """IoU gain of one report over a baseline, per class and for the mean."""

    version: int = REPORT_VERSION
    boost: Dict[str, Optional[float]]
    miou_boost: float


def compare_reports(adapted: EvaluationReport, baseline: EvaluationReport) -> ReportComparison:
    base = baseline.iou_by_name()
    boost: Dict[str, Optional[float]] = {}
    for name, value in adapted.iou_by_name().items():
        other = base.get(name)
        boost[name] = value - other if value is not None and other is not None else None
    return ReportComparison(boost=boost, miou_boost=adapted.miou - baseline.miou)


def format_report_table(report: EvaluationReport, reference: Optional[Dict[str, float]] = None) -> str:
    """Plain-text table of per-class IoU in percent, optionally next to reference values."""
    header = f"{'class':<14}{'IoU %':>8}"
    if reference is not None:
        header += f"{'ref %':>8}{'diff':>8}"
    lines = [header, "-" * len(header)]

    def row(name: str, value: Optional[float]) -> str:
        text = f"{name:<14}{'n/a' if value is None else f'{100 * value:.1f}':>8}"
        if reference is not None:
            ref = reference.get(name)
            text += f"{'' if ref is None else f'{ref:.1f}':>8}"
            text += f"{'' if ref is None or value is None else f'{100 * value - ref:+.1f}':>8}"
        return text

    for score in report.classes:
        lines.append(row(score.name, score.iou))
    lines.append("-" * len(header))
    lines.append(row("mIoU", report.miou))
    return "\n".join(lines)


def render(seg: SegmentationMap, class_map: ClassMap, evaluation: bool = False) -> np.ndarray:
    """Colour a class-id map: 3 x H x W float32 in [0, 1], ignore and unknown ids black."""
    rgb = class_map.palette(evaluation)[seg.ids]
    return np.ascontiguousarray(rgb.transpose(2, 0, 1), dtype=np.float32) / np.float32(255.0)


def decode_colors(rgb: np.ndarray, class_map: ClassMap, evaluation: bool = False) -> np.ndarray:
    """
    Inverse of :func:`render` for injective palettes.

    Args:
        rgb: 3 x H x W raster, uint8 or reals in [0, 1]
        class_map: colour table
        evaluation: decode against the evaluation classes

    Returns:
        np.ndarray: H x W uint8 ids; black maps to the ignore id unless a class owns it
    """
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise InvalidInputError(f"Expected a 3 x H x W raster, got {rgb.shape}")
    pixels = rgb if rgb.dtype == np.uint8 else np.rint(np.asarray(rgb, dtype=np.float64) * 255.0)
    pixels = pixels.astype(np.int64)
    keys = (pixels[0] << 16) | (pixels[1] << 8) | pixels[2]
    table = {0: class_map.ignore_id}
    for entry in class_map.eval_table() if evaluation else class_map.classes:
        r, g, b = entry.color
        key = (r << 16) | (g << 8) | b
        if key in table and key != 0:
            raise InvalidInputError(f"Palette is not injective: {entry.name!r} shares colour {entry.color}")
        table[key] = entry.id
    unique, inverse = np.unique(keys, return_inverse=True)
    unknown = [int(u) for u in unique if int(u) not in table]
    if unknown:
        u = unknown[0]
        raise DataError(f"Colour {(u >> 16, (u >> 8) & 255, u & 255)} is not in the palette")
    lut = np.array([table[int(u)] for u in unique], dtype=np.uint8)
    return lut[inverse].reshape(keys.shape)


def load_pair(
    image_path: PathLike,
    label_path: PathLike,
    class_map: ClassMap,
    remap: bool = True,
) -> Tuple[np.ndarray, SegmentationMap]:
    """
    Load an image and its class-id label.

    With a remap configured (and ``remap`` set) label ids become evaluation ids
    and every unmapped training id becomes the ignore id. Otherwise an id not in
    the class table raises DataError.
    """
    image = load_rgb(image_path)
    labels = load_labels(label_path)
    if labels.shape != image.shape[1:]:
        raise DataError(f"Label {label_path} is {labels.shape[::-1]}, image is {image.shape[:0:-1]}")
    seg = to_eval_map(labels, class_map, remap)
    return image, seg


def to_eval_map(labels: np.ndarray, class_map: ClassMap, remap: bool = True) -> SegmentationMap:
    """Evaluation-space map of training ids (``remap``) or of ids already in evaluation space."""
    if remap and class_map.has_remap:
        return SegmentationMap(class_map.to_eval(labels), class_map, class_map.ignore_id)
    seg = SegmentationMap(labels, class_map, class_map.ignore_id)
    seg.check_ids(class_map.known_ids(evaluation=class_map.has_remap))
    return seg


def resize_labels(ids: np.ndarray, height: int, width: int) -> np.ndarray:
    """Nearest-neighbour resize of a class-id raster (pixel centres, align-corners=false)."""
    rows = np.minimum(((np.arange(height) + 0.5) * ids.shape[0] / height).astype(np.int64), ids.shape[0] - 1)
    cols = np.minimum(((np.arange(width) + 0.5) * ids.shape[1] / width).astype(np.int64), ids.shape[1] - 1)
    return ids[rows[:, None], cols[None, :]]


def evaluate_pairs(
    pairs: Sequence[Tuple[np.ndarray, np.ndarray]],
    class_map: ClassMap,
    gt_eval_ids: bool = False,
) -> Tuple[ConfusionMatrix, EvaluationReport]:
    """
    Score (prediction, ground truth) id rasters.

    Predictions are training ids; ground truth is in training ids unless
    ``gt_eval_ids``. Predictions of a different size are resized to the
    ground truth with nearest-neighbour sampling.
    """
    evaluation = class_map.has_remap
    cm = ConfusionMatrix.empty(class_map.eval_size() if evaluation else class_map.num_classes, class_map.ignore_id)
    for pred, gt in pairs:
        if pred.shape != gt.shape:
            logger.debug(f"Resizing prediction {pred.shape} to {gt.shape}")
            pred = resize_labels(pred, *gt.shape)
        pred_map = to_eval_map(pred, class_map)
        gt_map = to_eval_map(gt, class_map, remap=not gt_eval_ids)
        cm = accumulate(cm, pred_map, gt_map)
    report = build_report(cm, class_map.names(evaluation), images=len(pairs))
    return cm, report


def evaluate_directories(
    pred_dir: PathLike,
    gt_dir: PathLike,
    class_map: ClassMap,
    gt_eval_ids: bool = False,
) -> Tuple[ConfusionMatrix, EvaluationReport]:
    """Pair ``*.png`` files by basename and score them."""
    pred_dir, gt_dir = Path(pred_dir), Path(gt_dir)
    for d in (pred_dir, gt_dir):
        if not d.is_dir():
            raise DataError(f"Directory not found: {d}")
    gt_files = sorted(gt_dir.glob("*.png"))
    if not gt_files:
        raise DataError(f"No ground-truth PNG files in {gt_dir}")
    pairs = []
    for gt_path in gt_files:
        pred_path = pred_dir / gt_path.name
        if not pred_path.is_file():
            raise DataError(f"No prediction for {gt_path.name} in {pred_dir}")
        pairs.append((load_labels(pred_path), load_labels(gt_path)))
    cm, report = evaluate_pairs(pairs, class_map, gt_eval_ids)
    logger.info(f"Evaluated {len(pairs)} image(s): mIoU {100 * report.miou:.1f}%")
    return cm, report
