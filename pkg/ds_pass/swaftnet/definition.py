"""
SwaftNet layer graph: definition, parameter table layout and padded layers.

Layer graph (strides relative to the input):

    stem      conv 7x7/2 + BN + ReLU, maxpool 3x3/2           -> stride 4
    layer1-4  ``blocks_per_stage`` basic residual blocks each -> strides 4, 8, 16, 32
    spp       pyramid pooling + 1x1 fuse + channel attention  -> stride 32, decoder_width
    decoder   3 x (bilinear x2, lateral from stride 16/8/4, conv 3x3 + BN + ReLU)
    head      1x1 conv to num_classes, bilinear x4            -> input resolution

The feature model is everything up to and including the SPP; the fusion model
is the decoder and head.
"""

from collections import OrderedDict
from dataclasses import dataclass
from typing import Dict, List, Literal, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

OUTPUT_STRIDE = 32
LATERAL_STRIDES = (16, 8, 4)

Shape = Tuple[int, ...]


class NetworkDef(BaseModel):
    """Architecture hyper-parameters of a SwaftNet instance."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    num_classes: int = Field(default=27, ge=1, le=255)
    input_channels: int = Field(default=3, ge=1)
    encoder_stage_channels: Tuple[int, int, int, int, int] = (64, 64, 128, 256, 512)
    blocks_per_stage: int = Field(default=2, ge=1)
    decoder_width: int = Field(default=128, ge=1)
    se_reduction: int = Field(default=16, ge=1)
    se_min_hidden: int = Field(default=4, ge=1)
    spp_grid_levels: Tuple[int, ...] = (1, 2, 4, 8)
    spp_level_width: Optional[int] = None
    spp_attention: bool = True
    lateral_mode: Literal["attention", "conv"] = "attention"
    split_point: Literal["after_spp"] = "after_spp"
    bn_epsilon: float = Field(default=1e-5, gt=0)

    @field_validator("encoder_stage_channels")
    @classmethod
    def _positive_widths(cls, value):
        if any(c < 1 for c in value):
            raise ValueError("encoder widths must be positive")
        return value

    @field_validator("spp_grid_levels")
    @classmethod
    def _levels(cls, value):
        if not value or any(g < 1 for g in value):
            raise ValueError("spp_grid_levels must be a non-empty list of positive grid sizes")
        return value

    @model_validator(mode="after")
    def _level_width(self) -> "NetworkDef":
        if self.spp_level_width is not None and self.spp_level_width < 1:
            raise ValueError("spp_level_width must be positive")
        return self

    @property
    def stem_channels(self) -> int:
        return self.encoder_stage_channels[0]

    @property
    def stage_channels(self) -> Tuple[int, int, int, int]:
        return tuple(self.encoder_stage_channels[1:])  # type: ignore[return-value]

    @property
    def level_width(self) -> int:
        if self.spp_level_width is not None:
            return self.spp_level_width
        return max(self.decoder_width // len(self.spp_grid_levels), 1)

    def lateral_channels(self, stride: int) -> int:
        """Channels of the encoder feature feeding the lateral at ``stride``."""
        return self.stage_channels[{4: 0, 8: 1, 16: 2}[stride]]

    def se_hidden(self, channels: int) -> int:
        return max(channels // self.se_reduction, self.se_min_hidden)


@dataclass(frozen=True)
class PaddedLayer:
    """A horizontally padded layer of the feature model."""

    name: str
    kernel: int
    stride: int
    pad: int
    input_stride: int


def _conv_bn(table: "OrderedDict[str, Shape]", prefix: str, cin: int, cout: int, k: int) -> None:
    table[f"{prefix}.conv.weight"] = (cout, cin, k, k)
    for suffix in ("scale", "shift", "mean", "var"):
        table[f"{prefix}.bn.{suffix}"] = (cout,)


def _se(table: "OrderedDict[str, Shape]", prefix: str, channels: int, hidden: int) -> None:
    table[f"{prefix}.fc1.weight"] = (hidden, channels)
    table[f"{prefix}.fc1.bias"] = (hidden,)
    table[f"{prefix}.fc2.weight"] = (channels, hidden)
    table[f"{prefix}.fc2.bias"] = (channels,)


def block_names(definition: NetworkDef) -> List[Tuple[str, int, int, int]]:
    """(prefix, in_channels, out_channels, stride) of every residual block in order."""
    blocks = []
    cin = definition.stem_channels
    for stage, cout in enumerate(definition.stage_channels, start=1):
        for b in range(definition.blocks_per_stage):
            stride = 2 if (b == 0 and stage > 1) else 1
            blocks.append((f"layer{stage}.{b}", cin, cout, stride))
            cin = cout
    return blocks


def needs_projection(cin: int, cout: int, stride: int) -> bool:
    return cin != cout or stride != 1


def param_shapes(definition: NetworkDef) -> "OrderedDict[str, Shape]":
    """
    Ordered parameter table of a network: name -> shape.

    The order is the order parameters are drawn in by seeded initialisation and
    written to weight containers.
    """
    table: "OrderedDict[str, Shape]" = OrderedDict()
    d = definition
    _conv_bn(table, "stem", d.input_channels, d.stem_channels, 7)
    for prefix, cin, cout, stride in block_names(d):
        _conv_bn(table, f"{prefix}.conv1", cin, cout, 3)
        _conv_bn(table, f"{prefix}.conv2", cout, cout, 3)
        if needs_projection(cin, cout, stride):
            _conv_bn(table, f"{prefix}.downsample", cin, cout, 1)

    top = d.stage_channels[3]
    for i, _ in enumerate(d.spp_grid_levels):
        table[f"spp.level{i}.weight"] = (d.level_width, top, 1, 1)
        table[f"spp.level{i}.bias"] = (d.level_width,)
    table["spp.fuse.weight"] = (d.decoder_width, top + d.level_width * len(d.spp_grid_levels), 1, 1)
    table["spp.fuse.bias"] = (d.decoder_width,)
    if d.spp_attention:
        _se(table, "spp.se", d.decoder_width, d.se_hidden(d.decoder_width))

    for stride in LATERAL_STRIDES:
        cin = d.lateral_channels(stride)
        if d.lateral_mode == "attention":
            _se(table, f"lateral{stride}.se", cin, d.se_hidden(cin))
            if cin != d.decoder_width:
                table[f"lateral{stride}.proj.weight"] = (d.decoder_width, cin, 1, 1)
        else:
            _conv_bn(table, f"lateral{stride}", cin, d.decoder_width, 1)
        _conv_bn(table, f"decoder{stride}", d.decoder_width, d.decoder_width, 3)

    table["classifier.weight"] = (d.num_classes, d.decoder_width, 1, 1)
    table["classifier.bias"] = (d.num_classes,)
    return table


def fan_in(name: str, table: Dict[str, Shape]) -> int:
    """Fan-in of the convolution or fully connected layer owning ``name`` (weight or bias)."""
    layer = name.rsplit(".", 1)[0]
    weight = table[f"{layer}.weight"]
    size = 1
    for dim in weight[1:]:
        size *= dim
    return size


def padded_layers(definition: NetworkDef) -> List[PaddedLayer]:
    """Every horizontally padded layer of the feature model, in execution order."""
    layers = [PaddedLayer("stem.conv", 7, 2, 3, 1), PaddedLayer("stem.pool", 3, 2, 1, 2)]
    stride = 4
    for prefix, _, _, block_stride in block_names(definition):
        layers.append(PaddedLayer(f"{prefix}.conv1", 3, block_stride, 1, stride))
        stride *= block_stride
        layers.append(PaddedLayer(f"{prefix}.conv2", 3, 1, 1, stride))
    return layers
