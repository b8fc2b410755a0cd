"""Shared pytest fixtures."""

from pathlib import Path

import numpy as np
import pytest

from ds_pass.annular_geometry import AnnularCameraModel
from ds_pass.labels import load_class_map, parse_class_map
from ds_pass.swaftnet import NetworkDef, SeededRandom, build

CONFIG_DIR = Path(__file__).parent / "configs"

NETWORK_SEED = 42

# reduced widths keep randomized property trials fast
SMALL_NETWORK = {
    "num_classes": 5,
    "encoder_stage_channels": (8, 8, 16, 16, 32),
    "decoder_width": 16,
    "se_reduction": 4,
    "se_min_hidden": 2,
}


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_def():
    return NetworkDef(**SMALL_NETWORK)


@pytest.fixture(scope="session")
def small_net(small_def):
    return build(small_def, SeededRandom(NETWORK_SEED))


@pytest.fixture(scope="session")
def default_net():
    return build(NetworkDef(), SeededRandom(NETWORK_SEED))


@pytest.fixture(scope="session")
def panorama():
    """The 3 x 64 x 256 random panorama of the equivalence checks."""
    return np.random.default_rng(NETWORK_SEED).uniform(0.0, 1.0, size=(3, 64, 256)).astype(np.float32)


@pytest.fixture
def camera():
    return AnnularCameraModel(
        center_x=100.0,
        center_y=100.0,
        r_inner=20.0,
        r_outer=80.0,
        source_width=200,
        source_height=200,
    )


@pytest.fixture(scope="session")
def pass_classes():
    return load_class_map(CONFIG_DIR / "pass_classes.json")


@pytest.fixture
def two_class_map():
    return parse_class_map(
        [
            {"id": 0, "name": "road", "color": [128, 64, 128]},
            {"id": 1, "name": "car", "color": [0, 0, 142]},
        ]
    )
