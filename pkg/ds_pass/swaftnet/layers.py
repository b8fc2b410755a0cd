"""
SwaftNet building blocks: squeeze-excite, attention laterals and the SPP module.
"""

import logging
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from .. import tensor_core as tc
from ..errors import InvalidInputError
from ..tensor_core import ConvParams, PaddingSpec, Tensor

logger = logging.getLogger(__name__)

_NO_PAD = PaddingSpec()


@dataclass(frozen=True)
class LinearParams:
    weight: np.ndarray
    bias: Optional[np.ndarray] = None


@dataclass(frozen=True)
class SEParams:
    """Squeeze-excite bottleneck: fc1 is hidden x C, fc2 is C x hidden."""

    fc1: LinearParams
    fc2: LinearParams

    def check(self, channels: int) -> None:
        w1, w2 = self.fc1.weight, self.fc2.weight
        if w1.ndim != 2 or w2.ndim != 2 or w1.shape[1] != channels or w2.shape != (channels, w1.shape[0]):
            raise InvalidInputError(
                f"squeeze-excite weights {w1.shape} / {w2.shape} do not fit {channels} channels"
            )


@dataclass(frozen=True)
class SPPParams:
    levels: Sequence[ConvParams]
    fuse: ConvParams
    se: Optional[SEParams] = None


def se_block(x: Tensor, se: SEParams) -> Tensor:
    """
    Channel attention: d = sigmoid(fc2 . relu(fc1 . avgpool(x))), output = x scaled by d.
    """
    x = tc.as_tensor(x)
    se.check(x.shape[0])
    squeezed = tc.global_avg_pool(x)
    hidden = np.maximum(tc.linear(squeezed, se.fc1.weight, se.fc1.bias), np.float32(0.0))
    descriptor = tc.sigmoid(tc.linear(hidden, se.fc2.weight, se.fc2.bias))
    return tc.scale_channels(x, descriptor)


def pointwise(x: Tensor, p: ConvParams) -> Tensor:
    """1x1 convolution (no padding)."""
    return tc.conv2d(x, p, _NO_PAD)


def attention_lateral(
    encoder_feature: Tensor,
    se: SEParams,
    projection: Optional[ConvParams],
    decoder_feature: Tensor,
) -> Tensor:
    """
    Merge an encoder stage into the decoder: decoder + project(se_block(encoder)).

    The squeeze-excite re-weighting runs first; the 1x1 projection only exists
    when the encoder channel count differs from the decoder width.
    """
    encoder_feature = tc.as_tensor(encoder_feature)
    decoder_feature = tc.as_tensor(decoder_feature)
    if encoder_feature.shape[1:] != decoder_feature.shape[1:]:
        raise InvalidInputError(
            f"Lateral spatial mismatch: encoder {encoder_feature.shape[1:]} vs decoder {decoder_feature.shape[1:]}"
        )
    weighted = se_block(encoder_feature, se)
    if projection is not None:
        weighted = pointwise(weighted, projection)
    elif weighted.shape[0] != decoder_feature.shape[0]:
        raise InvalidInputError(
            f"Lateral has {weighted.shape[0]} channels but the decoder {decoder_feature.shape[0]}; a projection is required"
        )
    return tc.add(weighted, decoder_feature)


def _effective_levels(levels: Sequence[ConvParams], grid: Sequence[int], h: int, w: int, clamp: bool):
    if len(levels) != len(grid):
        raise InvalidInputError(f"{len(levels)} level convolutions for {len(grid)} grid levels")
    if not clamp:
        for g in grid:
            if g > h or g > w:
                raise InvalidInputError(f"SPP grid level {g} exceeds the {h}x{w} feature map")
    return [(min(g, h), min(g, w)) for g in grid]


def pyramid_branch(x: Tensor, level: ConvParams, grid: int, periodic: bool, clamp: bool = True) -> Tensor:
    """
    One pyramid level: pool, 1x1 conv, upsample back to x's size.

    Grid mode pools to a g x g grid. Periodic (panoramic) mode pools rows into
    g bins and columns with a circular window of ceil(width / g), which keeps
    the branch equivariant to circular column shifts.
    """
    x = tc.as_tensor(x)
    _, h, w = x.shape
    ((gh, gw),) = _effective_levels([level], [grid], h, w, clamp)
    if periodic:
        window = max(1, math.ceil(w / grid))
        pooled = tc.ring_box_mean(tc.adaptive_avg_pool(x, gh, w), window)
    else:
        pooled = tc.adaptive_avg_pool(x, gh, gw)
    branch = pointwise(pooled, level)
    return tc.bilinear_upsample(branch, h, w, wrap=periodic)


def spp_forward(
    x: Tensor,
    params: SPPParams,
    grid_levels: Sequence[int],
    periodic: bool = False,
    clamp_levels: bool = True,
) -> Tensor:
    """
    Spatial pyramid pooling followed by the inserted channel attention.

    Args:
        x: top encoder feature map (stride 32)
        params: level convolutions, fuse convolution and optional SE weights
        grid_levels: pooling grid sizes, one per level convolution
        periodic: treat the width axis as a 360 degree ring
        clamp_levels: clamp grid sizes larger than the map to its extent
            instead of raising

    Returns:
        Tensor: decoder_width x H x W recalibrated pyramid features
    """
    x = tc.as_tensor(x)
    _, h, w = x.shape
    if h == 0 or w == 0:
        raise InvalidInputError("spp_forward of an empty feature map")
    effective = _effective_levels(params.levels, grid_levels, h, w, clamp_levels)
    if any(e != (g, g) for e, g in zip(effective, grid_levels)):
        logger.debug(f"SPP levels {list(grid_levels)} clamped to {effective} for a {h}x{w} map")
    branches: List[Tensor] = [x]
    for level, g in zip(params.levels, grid_levels):
        branches.append(pyramid_branch(x, level, g, periodic, clamp_levels))
    fused = pointwise(tc.concat_channels(branches), params.fuse)
    if params.se is not None:
        fused = se_block(fused, params.se)
    return fused
