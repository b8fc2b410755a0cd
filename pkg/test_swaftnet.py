import struct
from collections import OrderedDict

import numpy as np
import pytest

from ds_pass.errors import ConfigError, FormatError, InvalidInputError
from ds_pass.swaftnet import (
    FromWeights,
    NetworkDef,
    NetworkWeights,
    PaddingPolicy,
    SeededRandom,
    build,
    class_heatmap,
    feature_forward,
    fusion_forward,
    load_weights,
    padded_layers,
    param_shapes,
    save_weights,
    seeded_weights,
    spp_forward,
)
from ds_pass.swaftnet.definition import fan_in
from ds_pass.swaftnet.weights import decode_weights
from ds_pass.tensor_core import PaddingSpec

from conftest import SMALL_NETWORK


@pytest.mark.parametrize("height,width", [(64, 128), (96, 256)])
def test_logits_have_input_resolution(default_net, height, width):
    x = np.random.default_rng(0).uniform(size=(3, height, width)).astype(np.float32)
    features = feature_forward(default_net, x, PaddingPolicy("ring"))
    assert features.spp_feature.shape == (128, height // 32, width // 32)
    assert features.stage_features[4].shape == (64, height // 4, width // 4)
    assert features.stage_features[8].shape == (128, height // 8, width // 8)
    assert features.stage_features[16].shape == (256, height // 16, width // 16)
    logits = fusion_forward(default_net, features)
    assert logits.shape == (27, height, width)
    assert logits.dtype == np.float32


def test_parameter_table_follows_the_layer_graph():
    table = param_shapes(NetworkDef())
    assert table["stem.conv.weight"] == (64, 3, 7, 7)
    assert table["layer2.0.downsample.conv.weight"] == (128, 64, 1, 1)
    assert "layer1.0.downsample.conv.weight" not in table
    assert table["spp.fuse.weight"] == (128, 512 + 4 * 32, 1, 1)
    assert table["spp.se.fc1.weight"] == (8, 128)
    assert table["lateral4.se.fc1.weight"] == (4, 64)
    assert table["lateral4.proj.weight"] == (128, 64, 1, 1)
    assert "lateral8.proj.weight" not in table
    assert table["classifier.weight"] == (27, 128, 1, 1)
    assert list(table)[-1] == "classifier.bias"


def test_network_variants_change_the_table():
    no_attention = param_shapes(NetworkDef(spp_attention=False))
    assert not any(name.startswith("spp.se") for name in no_attention)
    conv_laterals = param_shapes(NetworkDef(lateral_mode="conv"))
    assert "lateral16.conv.weight" in conv_laterals
    assert not any(".se." in name and name.startswith("lateral") for name in conv_laterals)


def test_conv_laterals_run(small_def):
    net = build(small_def.model_copy(update={"lateral_mode": "conv"}), SeededRandom(3))
    x = np.random.default_rng(1).uniform(size=(3, 64, 64)).astype(np.float32)
    assert fusion_forward(net, feature_forward(net, x)).shape == (5, 64, 64)


def test_padded_layers_cover_every_spatial_convolution():
    layers = {layer.name: layer for layer in padded_layers(NetworkDef())}
    assert layers["stem.conv"].pad == 3 and layers["stem.conv"].stride == 2
    assert layers["stem.pool"].input_stride == 2
    assert layers["layer4.0.conv1"].input_stride == 16 and layers["layer4.0.conv1"].stride == 2
    assert layers["layer4.1.conv2"].input_stride == 32
    assert len(layers) == 2 + 4 * 2 * 2


def test_seeded_weights_are_reproducible(small_def):
    a = seeded_weights(small_def, 42)
    assert a.bit_equal(seeded_weights(small_def, 42))
    assert not a.bit_equal(seeded_weights(small_def, 43))


def test_seeded_weights_follow_the_documented_distribution(small_def):
    weights = seeded_weights(small_def, 7)
    table = param_shapes(small_def)
    for name, arr in weights.params.items():
        if ".bn." in name:
            continue
        assert np.abs(arr).max() <= np.sqrt(1.0 / fan_in(name, table)) + 1e-7
    np.testing.assert_array_equal(weights["stem.bn.scale"], 1.0)
    np.testing.assert_array_equal(weights["stem.bn.var"], 1.0)
    np.testing.assert_array_equal(weights["stem.bn.mean"], 0.0)


def test_weight_container_round_trip_is_bit_exact(tmp_path):
    definition = NetworkDef()
    weights = seeded_weights(definition, 42)
    path = tmp_path / "swaftnet.dspw"
    save_weights(weights, path)
    loaded = load_weights(path, definition)
    assert loaded.bit_equal(weights)
    assert list(loaded) == list(param_shapes(definition))


def test_corrupt_containers_report_offsets(tmp_path, small_def):
    path = tmp_path / "w.dspw"
    save_weights(seeded_weights(small_def, 1), path)
    payload = path.read_bytes()

    with pytest.raises(FormatError) as bad_magic:
        decode_weights(b"XXXX" + payload[4:])
    assert bad_magic.value.offset == 0

    with pytest.raises(FormatError, match="version"):
        decode_weights(payload[:4] + struct.pack("<I", 99) + payload[8:])

    with pytest.raises(FormatError, match="Truncated") as truncated:
        decode_weights(payload[:-3])
    assert truncated.value.offset is not None

    with pytest.raises(FormatError, match="trailing"):
        decode_weights(payload + b"\x00")


def test_load_weights_checks_the_table(tmp_path, small_def):
    with pytest.raises(ConfigError):
        load_weights(tmp_path / "missing.dspw")

    weights = seeded_weights(small_def, 1)
    missing = NetworkWeights(OrderedDict((k, v) for k, v in weights.params.items() if k != "classifier.bias"))
    save_weights(missing, tmp_path / "missing_param.dspw")
    with pytest.raises(InvalidInputError, match="classifier.bias"):
        load_weights(tmp_path / "missing_param.dspw", small_def)

    orphan = NetworkWeights(OrderedDict(weights.params))
    orphan.params["extra.weight"] = np.zeros(3, dtype=np.float32)
    with pytest.raises(InvalidInputError, match="extra.weight"):
        build(small_def, FromWeights(orphan))

    reshaped = NetworkWeights(OrderedDict(weights.params))
    reshaped.params["classifier.bias"] = np.zeros(6, dtype=np.float32)
    with pytest.raises(InvalidInputError, match="shape"):
        build(small_def, FromWeights(reshaped))


def test_built_networks_are_read_only(small_net):
    with pytest.raises(ValueError):
        small_net.weights["stem.conv.weight"][0, 0, 0, 0] = 1.0


def test_build_from_weights_matches_seeded_build(small_def, small_net):
    rebuilt = build(small_def, FromWeights(seeded_weights(small_def, 42)))
    assert rebuilt.weights.bit_equal(small_net.weights)


def test_segments_must_be_multiples_of_32(small_net):
    with pytest.raises(InvalidInputError):
        feature_forward(small_net, np.zeros((3, 64, 80), dtype=np.float32))
    with pytest.raises(InvalidInputError):
        feature_forward(small_net, np.zeros((1, 64, 64), dtype=np.float32))


def test_padding_overrides_must_match_layer_pads(small_net):
    policy = PaddingPolicy("zero", {"stem.conv": PaddingSpec.uniform("ring", 1)})
    with pytest.raises(InvalidInputError):
        feature_forward(small_net, np.zeros((3, 32, 32), dtype=np.float32), policy)


def test_feature_forward_records_boundary_strips(small_net):
    x = np.random.default_rng(5).uniform(size=(3, 32, 64)).astype(np.float32)
    out = feature_forward(small_net, x, PaddingPolicy("ring"))
    strips = out.boundary_strips["stem.conv"]
    np.testing.assert_array_equal(strips.left, x[:, :, :3])
    np.testing.assert_array_equal(strips.right, x[:, :, -3:])
    assert set(out.boundary_strips) == {layer.name for layer in padded_layers(small_net.definition)}


def test_spp_levels_are_clamped_or_rejected(small_net):
    x = np.random.default_rng(2).normal(size=(32, 2, 4)).astype(np.float32)
    params = small_net.spp_params()
    levels = small_net.definition.spp_grid_levels
    assert spp_forward(x, params, levels).shape == (16, 2, 4)
    assert spp_forward(x, params, levels, periodic=True).shape == (16, 2, 4)
    with pytest.raises(InvalidInputError):
        spp_forward(x, params, levels, clamp_levels=False)


def test_periodic_spp_commutes_with_column_shifts(small_net):
    x = np.random.default_rng(3).normal(size=(32, 2, 8)).astype(np.float32)
    params = small_net.spp_params()
    levels = small_net.definition.spp_grid_levels
    shifted = spp_forward(np.roll(x, 3, axis=2), params, levels, periodic=True)
    np.testing.assert_allclose(shifted, np.roll(spp_forward(x, params, levels, periodic=True), 3, axis=2), atol=1e-5)


def test_class_heatmap_is_a_probability(small_net):
    x = np.random.default_rng(4).uniform(size=(3, 32, 64)).astype(np.float32)
    logits = fusion_forward(small_net, feature_forward(small_net, x, PaddingPolicy("ring")))
    total = sum(class_heatmap(logits, c) for c in range(SMALL_NETWORK["num_classes"]))
    np.testing.assert_allclose(total, 1.0, rtol=1e-5)
    with pytest.raises(InvalidInputError):
        class_heatmap(logits, 5)


def test_fusion_rejects_inconsistent_features(small_net):
    x = np.random.default_rng(6).uniform(size=(3, 32, 64)).astype(np.float32)
    features = feature_forward(small_net, x)
    broken = features.__class__(
        stage_features={**features.stage_features, 8: features.stage_features[8][:, :, :-1]},
        spp_feature=features.spp_feature,
    )
    with pytest.raises(InvalidInputError):
        fusion_forward(small_net, broken)
