"""
SwaftNet inference split into the feature model (encoder + SPP) and the fusion
model (decoder + classifier).

The feature model is written as a step generator: every horizontally padded
layer yields a :class:`PadRequest` and waits for the PaddingSpec to use, and
the global-context layers yield a :class:`GatherRequest` for the full-width
stride-32 map. :func:`feature_forward` answers the requests for a single
tensor; the adaptation coordinator answers them for N segments in lock-step.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Generator, Literal, Mapping, Optional, Tuple, Union

import numpy as np

from .. import tensor_core as tc
from ..errors import InvalidInputError
from ..tensor_core import ConvParams, PaddingSpec, Tensor
from .definition import (
    LATERAL_STRIDES,
    OUTPUT_STRIDE,
    NetworkDef,
    PaddedLayer,
    block_names,
    needs_projection,
    padded_layers,
)
from .layers import LinearParams, SEParams, SPPParams, attention_lateral, pointwise, spp_forward
from .weights import NetworkWeights, seeded_weights

logger = logging.getLogger(__name__)

_NO_PAD = PaddingSpec()

PolicyMode = Literal["zero", "ring"]


@dataclass(frozen=True)
class SeededRandom:
    seed: int


@dataclass(frozen=True)
class FromWeights:
    weights: NetworkWeights


@dataclass(frozen=True)
class Network:
    """An immutable SwaftNet instance: definition plus validated parameters."""

    definition: NetworkDef
    weights: NetworkWeights

    def conv(self, prefix: str, stride: int = 1) -> ConvParams:
        bias = f"{prefix}.bias"
        return ConvParams(
            self.weights[f"{prefix}.weight"],
            self.weights[bias] if bias in self.weights else None,
            stride,
        )

    def batchnorm(self, x: Tensor, prefix: str) -> Tensor:
        w = self.weights
        return tc.batchnorm_inference(
            x,
            w[f"{prefix}.scale"],
            w[f"{prefix}.shift"],
            w[f"{prefix}.mean"],
            w[f"{prefix}.var"],
            epsilon=self.definition.bn_epsilon,
        )

    def conv_bn(self, x: Tensor, prefix: str, spec: PaddingSpec, stride: int = 1, activate: bool = True) -> Tensor:
        y = self.batchnorm(tc.conv2d(x, self.conv(f"{prefix}.conv", stride), spec), f"{prefix}.bn")
        return tc.relu(y) if activate else y

    def se(self, prefix: str) -> SEParams:
        w = self.weights
        return SEParams(
            LinearParams(w[f"{prefix}.fc1.weight"], w[f"{prefix}.fc1.bias"]),
            LinearParams(w[f"{prefix}.fc2.weight"], w[f"{prefix}.fc2.bias"]),
        )

    def spp_params(self) -> SPPParams:
        d = self.definition
        return SPPParams(
            levels=[self.conv(f"spp.level{i}") for i in range(len(d.spp_grid_levels))],
            fuse=self.conv("spp.fuse"),
            se=self.se("spp.se") if d.spp_attention else None,
        )


def build(definition: NetworkDef, init: Union[SeededRandom, FromWeights]) -> Network:
    """
    Instantiate a network.

    Args:
        definition: architecture hyper-parameters
        init: ``SeededRandom(seed)`` for reproducible random parameters or
            ``FromWeights(weights)`` for a loaded parameter table

    Returns:
        Network: parameters are copied and frozen (read-only arrays)

    Raises:
        InvalidInputError: a provided table misses, mis-shapes or adds a parameter
    """
    if isinstance(init, SeededRandom):
        weights = seeded_weights(definition, init.seed)
        source = f"seed {init.seed}"
    elif isinstance(init, FromWeights):
        init.weights.validate(definition)
        weights = init.weights
        source = "provided weights"
    else:
        raise InvalidInputError(f"Unknown initialisation {init!r}")
    frozen = NetworkWeights()
    for name, arr in weights.params.items():
        copy = np.array(arr, dtype=np.float32, copy=True)
        copy.setflags(write=False)
        frozen.params[name] = copy
    logger.debug(f"Built SwaftNet with {len(frozen)} parameter arrays from {source}")
    return Network(definition, frozen)


@dataclass(frozen=True)
class PadRequest:
    layer: PaddedLayer
    x: Tensor


@dataclass(frozen=True)
class GatherRequest:
    name: str
    x: Tensor


@dataclass(frozen=True)
class GatheredFeature:
    """Full-width stride-32 map, the requester's first column in it, and whether it wraps."""

    full: Tensor
    offset: int = 0
    periodic: bool = False


EncoderSteps = Generator[
    Union[PadRequest, GatherRequest],
    Union[PaddingSpec, GatheredFeature],
    Tuple[Dict[int, Tensor], Tensor],
]


@dataclass(frozen=True)
class PaddingPolicy:
    """Per-layer horizontal padding: ``mode`` everywhere unless a layer has an override."""

    mode: PolicyMode = "zero"
    overrides: Mapping[str, PaddingSpec] = field(default_factory=dict)

    def spec_for(self, layer: PaddedLayer) -> PaddingSpec:
        spec = self.overrides.get(layer.name)
        if spec is None:
            if self.mode not in ("zero", "ring"):
                raise InvalidInputError(f"Padding policy mode must be zero or ring, got {self.mode!r}")
            return PaddingSpec.uniform(self.mode, layer.pad)
        if spec.pads != (layer.pad,) * 4:
            raise InvalidInputError(f"Padding for {layer.name} must be {layer.pad} on every side, got {spec.pads}")
        return spec


@dataclass(frozen=True)
class BoundaryStrips:
    """Columns a layer input contributes to its neighbours' padding."""

    left: Tensor
    right: Tensor


def boundary_strips(x: Tensor, spec: PaddingSpec) -> BoundaryStrips:
    # the left neighbour pads its right side with our leftmost columns and vice versa
    width = x.shape[2]
    return BoundaryStrips(
        left=np.ascontiguousarray(x[:, :, : spec.pad_right]),
        right=np.ascontiguousarray(x[:, :, width - spec.pad_left :]),
    )


@dataclass(frozen=True)
class FeatureMaps:
    """Lateral features at strides 4, 8, 16 and the SPP output at stride 32."""

    stage_features: Dict[int, Tensor]
    spp_feature: Tensor


@dataclass(frozen=True)
class EncoderOutput(FeatureMaps):
    boundary_strips: Dict[str, BoundaryStrips] = field(default_factory=dict)


def check_segment_size(shape: Tuple[int, int, int], definition: NetworkDef) -> None:
    """Reject channel counts and sizes the network cannot take, before any data is touched."""
    c, h, w = shape
    if c != definition.input_channels:
        raise InvalidInputError(f"Network expects {definition.input_channels} input channels, got {c}")
    if w == 0 or w % OUTPUT_STRIDE:
        raise InvalidInputError(f"Segment width {w} is not a positive multiple of {OUTPUT_STRIDE}")
    if h == 0 or h % OUTPUT_STRIDE:
        raise InvalidInputError(f"Segment height {h} is not a positive multiple of {OUTPUT_STRIDE}")


def check_segment(segment: Tensor, definition: NetworkDef) -> Tensor:
    segment = tc.as_tensor(segment)
    check_segment_size(segment.shape, definition)
    return segment


def encoder_steps(net: Network, segment: Tensor) -> EncoderSteps:
    """
    Feature model of one segment as a request/response generator.

    Yields a PadRequest before every horizontally padded layer (expects a
    PaddingSpec back) and one GatherRequest for the SPP input (expects a
    GatheredFeature back). Returns (stage features by stride, SPP feature).
    """
    d = net.definition
    layers = {layer.name: layer for layer in padded_layers(d)}
    x = tc.as_tensor(segment)

    spec = yield PadRequest(layers["stem.conv"], x)
    x = net.conv_bn(x, "stem", spec, stride=2)
    spec = yield PadRequest(layers["stem.pool"], x)
    x = tc.maxpool2d(x, 3, 2, spec)

    stages: Dict[int, Tensor] = {}
    stride = 4
    for prefix, cin, cout, block_stride in block_names(d):
        spec = yield PadRequest(layers[f"{prefix}.conv1"], x)
        y = net.conv_bn(x, f"{prefix}.conv1", spec, stride=block_stride)
        spec = yield PadRequest(layers[f"{prefix}.conv2"], y)
        y = net.conv_bn(y, f"{prefix}.conv2", spec, activate=False)
        shortcut = x
        if needs_projection(cin, cout, block_stride):
            shortcut = net.conv_bn(x, f"{prefix}.downsample", _NO_PAD, stride=block_stride, activate=False)
        x = tc.relu(tc.add(y, shortcut))
        stride *= block_stride
        stages[stride] = x

    top = stages.pop(OUTPUT_STRIDE)
    gathered = yield GatherRequest("spp", top)
    full = tc.as_tensor(gathered.full)
    if full.shape[:2] != top.shape[:2] or (full.shape[2] < top.shape[2] and not gathered.periodic):
        raise InvalidInputError(f"Gathered map {full.shape} cannot contain a segment map {top.shape}")
    spp = spp_forward(full, net.spp_params(), d.spp_grid_levels, periodic=gathered.periodic)
    if full.shape[2] != top.shape[2] or gathered.offset:
        spp = tc.slice_columns(spp, gathered.offset, top.shape[2])
    return stages, spp


def feature_forward(net: Network, segment: Tensor, pad_policy: Optional[PaddingPolicy] = None) -> EncoderOutput:
    """
    Run the encoder and SPP over one tensor.

    Args:
        net: network
        segment: input_channels x H x W, H and W multiples of 32
        pad_policy: horizontal padding per layer (zero everywhere by default)

    Returns:
        EncoderOutput: stage features at strides 4/8/16, the stride-32 SPP
        output and the boundary strips of every padded layer input
    """
    policy = pad_policy or PaddingPolicy()
    segment = check_segment(segment, net.definition)
    steps = encoder_steps(net, segment)
    strips: Dict[str, BoundaryStrips] = {}
    request = next(steps)
    while True:
        if isinstance(request, PadRequest):
            spec = policy.spec_for(request.layer)
            strips[request.layer.name] = boundary_strips(request.x, spec)
            answer: Union[PaddingSpec, GatheredFeature] = spec
        else:
            answer = GatheredFeature(request.x, 0, periodic=policy.mode == "ring")
        try:
            request = steps.send(answer)
        except StopIteration as done:
            stages, spp = done.value
            break
    return EncoderOutput(stage_features=stages, spp_feature=spp, boundary_strips=strips)


def _check_feature_widths(features: FeatureMaps, definition: NetworkDef) -> None:
    spp = tc.as_tensor(features.spp_feature)
    if spp.shape[0] != definition.decoder_width:
        raise InvalidInputError(f"SPP feature has {spp.shape[0]} channels, decoder expects {definition.decoder_width}")
    _, h32, w32 = spp.shape
    for stride in LATERAL_STRIDES:
        if stride not in features.stage_features:
            raise InvalidInputError(f"Missing stage feature at stride {stride}")
        factor = OUTPUT_STRIDE // stride
        actual = features.stage_features[stride].shape
        expected = (definition.lateral_channels(stride), h32 * factor, w32 * factor)
        if tuple(actual) != expected:
            raise InvalidInputError(f"Stage feature at stride {stride} is {tuple(actual)}, expected {expected}")


def lateral(net: Network, stride: int, encoder_feature: Tensor, decoder_feature: Tensor) -> Tensor:
    d = net.definition
    if d.lateral_mode == "conv":
        return tc.add(net.conv_bn(encoder_feature, f"lateral{stride}", _NO_PAD), decoder_feature)
    proj = f"lateral{stride}.proj"
    projection = net.conv(proj) if f"{proj}.weight" in net.weights else None
    return attention_lateral(encoder_feature, net.se(f"lateral{stride}.se"), projection, decoder_feature)


def fusion_forward(net: Network, features: FeatureMaps, padding_mode: PolicyMode = "ring") -> Tensor:
    """
    Decode panoramic features into logits at input resolution.

    Args:
        net: network
        features: stride-consistent maps of one panorama (stage features and SPP)
        padding_mode: ``ring`` pads decoder convolutions circularly and
            resamples the width axis periodically; ``zero`` treats the borders
            as image edges

    Returns:
        Tensor: num_classes x 32*h x 32*w logits for an h x w SPP map
    """
    if padding_mode not in ("zero", "ring"):
        raise InvalidInputError(f"Decoder padding must be zero or ring, got {padding_mode!r}")
    _check_feature_widths(features, net.definition)
    wrap = padding_mode == "ring"
    spec = PaddingSpec.uniform(padding_mode, 1)
    x = tc.as_tensor(features.spp_feature)
    for stride in LATERAL_STRIDES:
        skip = features.stage_features[stride]
        x = tc.bilinear_upsample(x, skip.shape[1], skip.shape[2], wrap=wrap)
        x = lateral(net, stride, skip, x)
        x = net.conv_bn(x, f"decoder{stride}", spec)
    logits = pointwise(x, net.conv("classifier"))
    return tc.bilinear_upsample(logits, logits.shape[1] * 4, logits.shape[2] * 4, wrap=wrap)


def class_heatmap(logits: Tensor, class_id: int) -> np.ndarray:
    """Per-pixel softmax probability of one class, H x W in [0, 1]."""
    logits = tc.as_tensor(logits)
    if not 0 <= class_id < logits.shape[0]:
        raise InvalidInputError(f"Class {class_id} outside 0..{logits.shape[0] - 1}")
    return tc.softmax_channels(logits)[class_id]
