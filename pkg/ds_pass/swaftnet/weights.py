"""
Network parameter tables and the DSPW weight container.

Container layout (little-endian):

    magic   4 bytes  b"DSPW"
    version u32
    count   u32
    count x entry:
        name length u16, UTF-8 name
        rank u8, dims u32 x rank
        raw float32 values (product of dims)
"""

import logging
import struct
from collections import OrderedDict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterator, Optional, Tuple, Union

import numpy as np

from ..errors import ConfigError, FormatError, InvalidInputError
from .definition import NetworkDef, fan_in, param_shapes

logger = logging.getLogger(__name__)

MAGIC = b"DSPW"
CONTAINER_VERSION = 1

_BN_DEFAULTS = {"scale": 1.0, "shift": 0.0, "mean": 0.0, "var": 1.0}


@dataclass
class NetworkWeights:
    """Named parameter table: name -> float32 array with its declared shape."""

    params: "OrderedDict[str, np.ndarray]" = field(default_factory=OrderedDict)

    def __getitem__(self, name: str) -> np.ndarray:
        try:
            return self.params[name]
        except KeyError:
            raise InvalidInputError(f"Network has no parameter {name!r}") from None

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def __iter__(self) -> Iterator[str]:
        return iter(self.params)

    def __len__(self) -> int:
        return len(self.params)

    def shapes(self) -> Dict[str, Tuple[int, ...]]:
        return {name: tuple(arr.shape) for name, arr in self.params.items()}

    def bit_equal(self, other: "NetworkWeights") -> bool:
        if list(self.params) != list(other.params):
            return False
        return all(
            a.shape == b.shape and a.tobytes() == b.tobytes()
            for a, b in zip(self.params.values(), other.params.values())
        )

    def validate(self, definition: NetworkDef) -> None:
        """
        Check the table covers the definition exactly.

        Raises:
            InvalidInputError: naming the first missing, orphan or mis-shaped parameter
        """
        expected = param_shapes(definition)
        for name, shape in expected.items():
            if name not in self.params:
                raise InvalidInputError(f"Missing parameter {name!r} (expected shape {shape})")
            actual = tuple(self.params[name].shape)
            if actual != shape:
                raise InvalidInputError(f"Parameter {name!r} has shape {actual}, expected {shape}")
            if not np.all(np.isfinite(self.params[name])):
                raise InvalidInputError(f"Parameter {name!r} holds non-finite values")
        orphans = [name for name in self.params if name not in expected]
        if orphans:
            raise InvalidInputError(f"Orphan parameter {orphans[0]!r} is not part of the network")


def seeded_weights(definition: NetworkDef, seed: int) -> NetworkWeights:
    """
    Reproducible random parameters.

    Convolution and fully connected weights and biases are drawn from
    U(-sqrt(1/fan_in), +sqrt(1/fan_in)) in parameter-table order; batch
    normalisation starts as the identity.
    """
    rng = np.random.default_rng(seed)
    table = param_shapes(definition)
    params: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for name, shape in table.items():
        kind = name.rsplit(".", 1)[1]
        if ".bn." in name:
            params[name] = np.full(shape, _BN_DEFAULTS[kind], dtype=np.float32)
            continue
        bound = np.sqrt(1.0 / fan_in(name, table))
        params[name] = rng.uniform(-bound, bound, size=shape).astype(np.float32)
    return NetworkWeights(params)


def _encode(weights: NetworkWeights) -> bytes:
    chunks = [MAGIC, struct.pack("<II", CONTAINER_VERSION, len(weights))]
    for name, arr in weights.params.items():
        encoded = name.encode("utf-8")
        if len(encoded) > 0xFFFF:
            raise InvalidInputError(f"Parameter name too long: {name[:40]}...")
        chunks.append(struct.pack("<H", len(encoded)))
        chunks.append(encoded)
        chunks.append(struct.pack("<B", arr.ndim))
        chunks.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        chunks.append(np.ascontiguousarray(arr, dtype="<f4").tobytes())
    return b"".join(chunks)


def save_weights(weights: NetworkWeights, path: Union[str, Path]) -> None:
    """Write a weight container; the round trip through :func:`load_weights` is bit-exact."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    payload = _encode(weights)
    path.write_bytes(payload)
    logger.info(f"Saved {len(weights)} parameters to {path} ({len(payload)} bytes)")


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, size: int, what: str) -> bytes:
        if self.offset + size > len(self.data):
            raise FormatError(f"Truncated container while reading {what}", self.offset)
        chunk = self.data[self.offset : self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str, what: str) -> Tuple[int, ...]:
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def decode_weights(data: bytes) -> NetworkWeights:
    reader = _Reader(data)
    if reader.take(4, "magic") != MAGIC:
        raise FormatError("Bad magic bytes, not a DSPW weight container", 0)
    (version,) = reader.unpack("<I", "version")
    if version != CONTAINER_VERSION:
        raise FormatError(f"Unsupported container version {version}", 4)
    (count,) = reader.unpack("<I", "entry count")
    params: "OrderedDict[str, np.ndarray]" = OrderedDict()
    for _ in range(count):
        start = reader.offset
        (name_len,) = reader.unpack("<H", "name length")
        try:
            name = reader.take(name_len, "name").decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"Parameter name is not UTF-8: {e}", start) from e
        if name in params:
            raise FormatError(f"Duplicate parameter {name!r}", start)
        (rank,) = reader.unpack("<B", f"rank of {name}")
        dims = reader.unpack(f"<{rank}I", f"dims of {name}")
        size = int(np.prod(dims, dtype=np.int64)) if rank else 1
        raw = reader.take(4 * size, f"values of {name}")
        params[name] = np.frombuffer(raw, dtype="<f4").astype(np.float32).reshape(dims)
    if reader.offset != len(data):
        raise FormatError(f"{len(data) - reader.offset} trailing bytes after last entry", reader.offset)
    return NetworkWeights(params)


def load_weights(path: Union[str, Path], definition: Optional[NetworkDef] = None) -> NetworkWeights:
    """
    Read a weight container.

    Args:
        path: container file
        definition: when given, the table is validated against it

    Returns:
        NetworkWeights: the parameter table in file order

    Raises:
        ConfigError: the file does not exist
        FormatError: corrupt header or truncated payload (with byte offset)
        InvalidInputError: missing, orphan or mis-shaped parameter
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"Weight file not found: {path}")
    weights = decode_weights(path.read_bytes())
    if definition is not None:
        weights.validate(definition)
    logger.info(f"Loaded {len(weights)} parameters from {path}")
    return weights
