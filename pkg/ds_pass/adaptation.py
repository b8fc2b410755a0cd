"""
Segment-wise network adaptation.

The panorama is cut into N equal segments, each run through its own copy of
the feature model. At every horizontally padded layer the segments stop,
exchange boundary columns with their neighbours (segment 0's left neighbour is
segment N-1, which closes the ring) and continue. The stride-32 maps are
gathered once for the global-context layers. The per-stride maps are then
concatenated along the width (overlapping columns combined by elementwise max)
and decoded by the fusion model with ring padding.

With neighbour exchange, overlap a multiple of 32 and no resizing, the result
equals a single ring-padded pass over the whole panorama.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel

from . import tensor_core as tc
from .errors import InvalidInputError, InvariantError
from .labels import ClassMap, SegmentationMap
from .swaftnet.definition import LATERAL_STRIDES, OUTPUT_STRIDE, NetworkDef, padded_layers
from .swaftnet.model import (
    FeatureMaps,
    GatheredFeature,
    GatherRequest,
    Network,
    PaddingPolicy,
    PadRequest,
    check_segment,
    encoder_steps,
    feature_forward,
    fusion_forward,
)
from .tensor_core import PaddingSpec, Tensor

logger = logging.getLogger(__name__)

SegmentPadding = Literal["neighbor", "zero"]

FEATURE_STRIDES = LATERAL_STRIDES + (OUTPUT_STRIDE,)


@dataclass(frozen=True)
class SegmentPlan:
    """
    How a panorama of ``panorama_width`` columns is cut into segments.

    Segment i covers the circular columns
    [i * segment_width - overlap, (i + 1) * segment_width + overlap).
    ``resize_to`` is (width, height) applied to every segment last.
    """

    panorama_width: int
    num_segments: int = 4
    overlap: int = 0
    resize_to: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        if self.num_segments < 1:
            raise InvalidInputError(f"num_segments must be at least 1, got {self.num_segments}")
        if self.panorama_width < 1 or self.panorama_width % self.num_segments:
            raise InvalidInputError(
                f"Panorama width {self.panorama_width} is not divisible into {self.num_segments} segments"
            )
        if self.segment_width % OUTPUT_STRIDE:
            raise InvalidInputError(f"Segment width {self.segment_width} is not a multiple of {OUTPUT_STRIDE}")
        if not 0 <= self.overlap < self.segment_width:
            raise InvalidInputError(f"Overlap {self.overlap} must lie in [0, {self.segment_width})")
        if self.resize_to is not None:
            width, height = self.resize_to
            if width < OUTPUT_STRIDE or height < OUTPUT_STRIDE or width % OUTPUT_STRIDE or height % OUTPUT_STRIDE:
                raise InvalidInputError(f"Resized segments must be multiples of {OUTPUT_STRIDE}, got {width}x{height}")

    @property
    def segment_width(self) -> int:
        return self.panorama_width // self.num_segments

    @property
    def span(self) -> int:
        """Columns per segment including both overlaps."""
        return self.segment_width + 2 * self.overlap

    def columns(self, index: int) -> np.ndarray:
        start = index * self.segment_width - self.overlap
        return np.mod(np.arange(start, start + self.span), self.panorama_width)

    def boundaries(self) -> List[int]:
        """First column of every segment core (the seams between segments)."""
        return [i * self.segment_width for i in range(self.num_segments)]


def partition(panorama: Tensor, plan: SegmentPlan) -> List[Tensor]:
    """
    Cut a panorama into the plan's segments.

    Args:
        panorama: channels x H x W raster, W equal to ``plan.panorama_width``
        plan: segment plan

    Returns:
        List[Tensor]: N segments in azimuth order, resized last when the plan asks for it
    """
    panorama = tc.as_tensor(panorama)
    if panorama.shape[2] != plan.panorama_width:
        raise InvalidInputError(f"Panorama is {panorama.shape[2]} columns wide, plan expects {plan.panorama_width}")
    segments = []
    for i in range(plan.num_segments):
        segment = tc.slice_columns(panorama, i * plan.segment_width - plan.overlap, plan.span)
        if plan.resize_to is not None:
            width, height = plan.resize_to
            segment = tc.bilinear_upsample(segment, height, width)
        segments.append(segment)
    return segments


def reassemble(segments: Sequence[Tensor], plan: SegmentPlan) -> Tensor:
    """Inverse of :func:`partition` for plans without overlap or resizing."""
    if plan.overlap or plan.resize_to is not None:
        raise InvalidInputError("Only overlap-free, un-resized segments can be reassembled")
    if len(segments) != plan.num_segments:
        raise InvalidInputError(f"Expected {plan.num_segments} segments, got {len(segments)}")
    return tc.concat_width(segments)


@dataclass(frozen=True)
class ExchangeWindow:
    """Columns copied from each neighbour's layer input into a segment's padding."""

    layer: str
    input_stride: int
    pad: int
    left: Tuple[int, int]
    right: Tuple[int, int]


@dataclass(frozen=True)
class ExchangePlan:
    num_segments: int
    windows: Dict[str, ExchangeWindow] = field(default_factory=dict)

    def left_source(self, index: int) -> int:
        return (index - 1) % self.num_segments

    def right_source(self, index: int) -> int:
        return (index + 1) % self.num_segments

    def neighbor_spec(self, layer: str, index: int, inputs: Sequence[Tensor]) -> PaddingSpec:
        window = self.windows[layer]
        left = inputs[self.left_source(index)][:, :, window.left[0] : window.left[1]]
        right = inputs[self.right_source(index)][:, :, window.right[0] : window.right[1]]
        p = window.pad
        return PaddingSpec("neighbor", p, p, p, p, np.ascontiguousarray(left), np.ascontiguousarray(right))

    def describe(self) -> List[Dict[str, Any]]:
        return [
            {
                "layer": w.layer,
                "input_stride": w.input_stride,
                "pad": w.pad,
                "left_window": list(w.left),
                "right_window": list(w.right),
            }
            for w in self.windows.values()
        ]


def _fed_width(plan: SegmentPlan) -> Tuple[int, int]:
    """(core width, overlap) in input columns of the segments fed to the feature model."""
    if plan.resize_to is not None:
        return plan.resize_to[0], 0
    return plan.segment_width, plan.overlap


def exchange_plan(definition: NetworkDef, plan: SegmentPlan) -> ExchangePlan:
    """
    Boundary windows of every padded layer.

    At a layer of input stride s with pad p, core width w and overlap o, a
    segment's left padding is its left neighbour's columns [w/s - p, w/s) and
    its right padding is its right neighbour's columns [2o/s, 2o/s + p).
    """
    core, overlap = _fed_width(plan)
    windows: Dict[str, ExchangeWindow] = {}
    for layer in padded_layers(definition):
        s = layer.input_stride
        cw, ov = core // s, overlap // s
        if cw < layer.pad:
            raise InvalidInputError(f"Segments of {core} columns are too narrow for {layer.name} (pad {layer.pad})")
        windows[layer.name] = ExchangeWindow(layer.name, s, layer.pad, (cw - layer.pad, cw), (2 * ov, 2 * ov + layer.pad))
    return ExchangePlan(plan.num_segments, windows)


def fuse_segments(maps: Sequence[Tensor], core_width: int, overlap: int) -> Tensor:
    """
    Concatenate segment cores along the width; overlapping columns are max-combined.

    Args:
        maps: per-segment feature maps, each core_width + 2 * overlap columns
        core_width: columns each segment owns at this stride
        overlap: extra columns on each side at this stride
    """
    for m in maps:
        if m.shape[2] != core_width + 2 * overlap:
            raise InvalidInputError(f"Segment map of width {m.shape[2]} does not match {core_width} + 2*{overlap}")
    fused = tc.concat_width([m[:, :, overlap : overlap + core_width] for m in maps])
    if overlap == 0:
        return fused
    width = fused.shape[2]
    for i, m in enumerate(maps):
        left = np.mod(np.arange(i * core_width - overlap, i * core_width), width)
        fused[:, :, left] = tc.elementwise_max(fused[:, :, left], m[:, :, :overlap])
        right = np.mod(np.arange((i + 1) * core_width, (i + 1) * core_width + overlap), width)
        fused[:, :, right] = tc.elementwise_max(fused[:, :, right], m[:, :, overlap + core_width :])
    return fused


def _advance(steps, answer):
    try:
        return False, steps.send(answer)
    except StopIteration as done:
        return True, done.value


class _Lockstep:
    """Answers the feature models' requests for all segments at once."""

    def __init__(self, exchange: ExchangePlan, plan: SegmentPlan, segment_padding: SegmentPadding):
        self.exchange = exchange
        self.plan = plan
        self.segment_padding = segment_padding
        self.exchanged_layers = 0

    def answer(self, requests: List[Any]) -> List[Any]:
        kinds = {type(r) for r in requests}
        if len(kinds) != 1:
            raise InvariantError(f"Segment workers desynchronised: {sorted(k.__name__ for k in kinds)}")
        if isinstance(requests[0], GatherRequest):
            return self._gather(requests)
        names = {r.layer.name for r in requests}
        if len(names) != 1:
            raise InvariantError(f"Segment workers desynchronised at layers {sorted(names)}")
        layer = requests[0].layer
        self.exchanged_layers += 1
        if self.segment_padding == "zero":
            return [PaddingSpec.uniform("zero", layer.pad)] * len(requests)
        inputs = [r.x for r in requests]
        specs = [self.exchange.neighbor_spec(layer.name, i, inputs) for i in range(len(requests))]
        logger.debug(f"Exchanged {layer.pad} column(s) at {layer.name} (stride {layer.input_stride})")
        return specs

    def _gather(self, requests: List[GatherRequest]) -> List[GatheredFeature]:
        core, overlap = _fed_width(self.plan)
        cw, ov = core // OUTPUT_STRIDE, overlap // OUTPUT_STRIDE
        full = tc.concat_width([r.x[:, :, ov : ov + cw] for r in requests])
        width = full.shape[2]
        return [GatheredFeature(full, (i * cw - ov) % width, periodic=True) for i in range(len(requests))]


def _run_feature_models(
    net: Network,
    segments: List[Tensor],
    lockstep: _Lockstep,
    threads: Optional[int],
) -> List[Tuple[Dict[int, Tensor], Tensor]]:
    steps = [encoder_steps(net, segment) for segment in segments]
    answers: List[Any] = [None] * len(steps)
    workers = max(1, min(threads or len(steps), len(steps)))
    with ThreadPoolExecutor(max_workers=workers, thread_name_prefix="segment") as pool:
        while True:
            results = list(pool.map(_advance, steps, answers))
            finished = [done for done, _ in results]
            if all(finished):
                return [value for _, value in results]
            if any(finished):
                raise InvariantError("Segment workers desynchronised: some finished early")
            answers = lockstep.answer([request for _, request in results])


@dataclass
class AdaptedResult:
    logits: Tensor
    segmentation: SegmentationMap
    exchange: ExchangePlan
    approximate: bool = False
    timings: Dict[str, float] = field(default_factory=dict)


def adapted_forward(
    net: Network,
    panorama: Tensor,
    plan: SegmentPlan,
    segment_padding: SegmentPadding = "neighbor",
    threads: Optional[int] = None,
    class_map: Optional[ClassMap] = None,
) -> AdaptedResult:
    """
    Segment-wise inference over a 360 degree panorama.

    Args:
        net: network shared by every segment
        panorama: 3 x H x W raster
        plan: segment plan (overlap a multiple of 32; resizing requires overlap 0)
        segment_padding: ``neighbor`` exchanges boundary columns; ``zero`` pads
            every segment border with zeros
        threads: worker cap (defaults to one worker per segment)
        class_map: attached to the returned segmentation

    Returns:
        AdaptedResult: logits, class-id map, exchange plan, approximate flag and timings
    """
    panorama = check_segment(panorama, net.definition)
    if segment_padding not in ("neighbor", "zero"):
        raise InvalidInputError(f"segment_padding must be neighbor or zero, got {segment_padding!r}")
    if panorama.shape[2] != plan.panorama_width:
        raise InvalidInputError(f"Panorama is {panorama.shape[2]} columns wide, plan expects {plan.panorama_width}")
    if plan.overlap % OUTPUT_STRIDE:
        raise InvalidInputError(f"Overlap {plan.overlap} must be a multiple of {OUTPUT_STRIDE} for adapted inference")
    if plan.resize_to is not None and plan.overlap:
        raise InvalidInputError("Resized segments cannot overlap")

    timings: Dict[str, float] = {}
    start = time.perf_counter()
    segments = partition(panorama, plan)
    exchange = exchange_plan(net.definition, plan)
    lockstep = _Lockstep(exchange, plan, segment_padding)
    timings["partition"] = time.perf_counter() - start

    logger.info(
        f"Adapted inference: {plan.num_segments} segment(s) of {plan.segment_width} columns, "
        f"overlap {plan.overlap}, {segment_padding} padding"
    )
    start = time.perf_counter()
    outputs = _run_feature_models(net, segments, lockstep, threads)
    timings["features"] = time.perf_counter() - start
    logger.debug(f"{lockstep.exchanged_layers} padded layers synchronised")

    approximate = plan.resize_to is not None
    if approximate:
        logger.warning(f"Segments resized to {plan.resize_to}: adapted output is approximate")

    start = time.perf_counter()
    height = panorama.shape[1]
    per_stride: Dict[int, List[Tensor]] = {s: [] for s in FEATURE_STRIDES}
    for stages, spp in outputs:
        for s in FEATURE_STRIDES:
            fmap = spp if s == OUTPUT_STRIDE else stages[s]
            if approximate:
                fmap = tc.bilinear_upsample(fmap, height // s, plan.segment_width // s)
            per_stride[s].append(fmap)
    fused = {s: fuse_segments(maps, plan.segment_width // s, plan.overlap // s) for s, maps in per_stride.items()}
    features = FeatureMaps(stage_features={s: fused[s] for s in LATERAL_STRIDES}, spp_feature=fused[OUTPUT_STRIDE])
    timings["fusion"] = time.perf_counter() - start

    start = time.perf_counter()
    logits = fusion_forward(net, features, padding_mode="ring")
    timings["decoder"] = time.perf_counter() - start
    segmentation = SegmentationMap.from_logits(logits, class_map)
    return AdaptedResult(logits, segmentation, exchange, approximate, timings)


def run_adapted(
    net: Network,
    panorama: Tensor,
    plan: SegmentPlan,
    segment_padding: SegmentPadding = "neighbor",
    threads: Optional[int] = None,
) -> SegmentationMap:
    """Class-id map of :func:`adapted_forward`."""
    return adapted_forward(net, panorama, plan, segment_padding, threads).segmentation


def full_pass(net: Network, panorama: Tensor, padding_mode: Literal["zero", "ring"] = "ring") -> Tensor:
    """End-to-end inference treating the whole panorama as one segment."""
    encoded = feature_forward(net, panorama, PaddingPolicy(padding_mode))
    return fusion_forward(net, encoded, padding_mode=padding_mode)


def seam_report(logits_adapted: Tensor, logits_full: Tensor) -> np.ndarray:
    """Per-column maximum absolute logit difference (length = width)."""
    a = tc.as_tensor(logits_adapted)
    b = tc.as_tensor(logits_full)
    if a.shape != b.shape:
        raise InvalidInputError(f"Seam report needs equal shapes, got {a.shape} vs {b.shape}")
    return np.abs(a.astype(np.float64) - b.astype(np.float64)).max(axis=(0, 1))


class SeamSummary(BaseModel):
    max_abs: float
    boundary_max: float
    interior_median: float
    ratio: Optional[float] = None
    boundaries: List[int]
    band: int


def boundary_mask(width: int, boundaries: Sequence[int], band: int) -> np.ndarray:
    """Columns within ``band`` of a seam; the seam at b lies between columns b-1 and b."""
    mask = np.zeros(width, dtype=bool)
    for b in boundaries:
        mask[np.mod(np.arange(b - band, b + band), width)] = True
    return mask


def summarize_seams(profile: np.ndarray, boundaries: Sequence[int], band: int = 2) -> SeamSummary:
    """Compare the seam profile at segment boundaries with the interior columns."""
    profile = np.asarray(profile, dtype=np.float64)
    mask = boundary_mask(profile.shape[0], boundaries, band)
    boundary_max = float(profile[mask].max()) if mask.any() else 0.0
    interior_median = float(np.median(profile[~mask])) if (~mask).any() else 0.0
    return SeamSummary(
        max_abs=float(profile.max()) if profile.size else 0.0,
        boundary_max=boundary_max,
        interior_median=interior_median,
        ratio=boundary_max / interior_median if interior_median > 0 else None,
        boundaries=list(boundaries),
        band=band,
    )
