"""SwaftNet: SwiftNet-style encoder/decoder with attention laterals and SPP channel attention."""

from .definition import LATERAL_STRIDES, OUTPUT_STRIDE, NetworkDef, PaddedLayer, padded_layers, param_shapes
from .layers import LinearParams, SEParams, SPPParams, attention_lateral, pyramid_branch, se_block, spp_forward
from .model import (
    BoundaryStrips,
    EncoderOutput,
    FeatureMaps,
    FromWeights,
    GatheredFeature,
    GatherRequest,
    Network,
    PaddingPolicy,
    PadRequest,
    SeededRandom,
    build,
    check_segment,
    check_segment_size,
    class_heatmap,
    encoder_steps,
    feature_forward,
    fusion_forward,
)
from .weights import NetworkWeights, load_weights, save_weights, seeded_weights

__all__ = [
    "LATERAL_STRIDES",
    "OUTPUT_STRIDE",
    "BoundaryStrips",
    "EncoderOutput",
    "FeatureMaps",
    "FromWeights",
    "GatheredFeature",
    "GatherRequest",
    "LinearParams",
    "Network",
    "NetworkDef",
    "NetworkWeights",
    "PaddedLayer",
    "PaddingPolicy",
    "PadRequest",
    "SEParams",
    "SPPParams",
    "SeededRandom",
    "attention_lateral",
    "build",
    "check_segment",
    "check_segment_size",
    "class_heatmap",
    "encoder_steps",
    "feature_forward",
    "fusion_forward",
    "load_weights",
    "padded_layers",
    "param_shapes",
    "pyramid_branch",
    "save_weights",
    "se_block",
    "seeded_weights",
    "spp_forward",
]
