"""
Dense tensor kernels for SwaftNet inference.

A Tensor is a float32 numpy array laid out channels x height x width with the
width index fastest. Kernels never modify their inputs.

Padding is horizontal-aware: ``ring`` copies columns from the opposite side of
the tensor and ``neighbor`` takes them from buffers supplied by the adjacent
panorama segments. Vertical padding is always zero-fill.

Convolution lowers the padded input to column windows and reduces over
(in-channel, kernel row, kernel column) with one BLAS product per call. BLAS
picks its own summation order, so results are reproducible on the same machine
and BLAS build but may differ in the last bits across builds.
"""

import logging
from dataclasses import dataclass
from typing import List, Literal, Optional, Sequence, Tuple

import numpy as np
import numpy.typing as npt
from numpy.lib.stride_tricks import sliding_window_view

from .errors import InvalidInputError, InvariantError

logger = logging.getLogger(__name__)

Tensor = npt.NDArray[np.float32]

PadMode = Literal["zero", "ring", "neighbor"]
PAD_MODES = ("zero", "ring", "neighbor")


def as_tensor(x: npt.ArrayLike) -> Tensor:
    """Validate and convert to a contiguous float32 channels x height x width array."""
    arr = np.ascontiguousarray(x, dtype=np.float32)
    if arr.ndim != 3:
        raise InvalidInputError(f"Tensors are channels x height x width, got shape {arr.shape}")
    return arr


def _finite(out: np.ndarray, op: str) -> np.ndarray:
    if not np.all(np.isfinite(out)):
        raise InvariantError(f"{op} produced non-finite values")
    return out


@dataclass(frozen=True)
class PaddingSpec:
    """Horizontal padding policy of one convolution or pooling layer."""

    mode: PadMode = "zero"
    pad_left: int = 0
    pad_right: int = 0
    pad_top: int = 0
    pad_bottom: int = 0
    left_buffer: Optional[Tensor] = None
    right_buffer: Optional[Tensor] = None

    @classmethod
    def uniform(cls, mode: PadMode, pad: int) -> "PaddingSpec":
        return cls(mode=mode, pad_left=pad, pad_right=pad, pad_top=pad, pad_bottom=pad)

    @property
    def pads(self) -> Tuple[int, int, int, int]:
        return self.pad_top, self.pad_bottom, self.pad_left, self.pad_right

    def with_mode(self, mode: PadMode) -> "PaddingSpec":
        return PaddingSpec(mode, self.pad_left, self.pad_right, self.pad_top, self.pad_bottom)

    def validate(self, x: Tensor) -> None:
        if self.mode not in PAD_MODES:
            raise InvalidInputError(f"Unknown padding mode {self.mode!r}")
        if min(self.pads) < 0:
            raise InvalidInputError(f"Pad amounts must be non-negative, got {self.pads}")
        if self.mode != "neighbor":
            return
        for side, buffer, amount in (("left", self.left_buffer, self.pad_left), ("right", self.right_buffer, self.pad_right)):
            if amount == 0:
                continue
            if buffer is None:
                raise InvalidInputError(f"Neighbor padding needs a {side} buffer")
            if buffer.ndim != 3 or buffer.shape[0] != x.shape[0] or buffer.shape[1] != x.shape[1]:
                raise InvalidInputError(
                    f"{side} buffer shape {buffer.shape} does not match input channels/height {x.shape[:2]}"
                )
            if buffer.shape[2] < amount:
                raise InvalidInputError(f"{side} buffer is {buffer.shape[2]} columns wide, padding needs {amount}")


@dataclass(frozen=True)
class ConvParams:
    """Convolution weights (out x in x kh x kw), optional bias and stride."""

    weights: Tensor
    bias: Optional[np.ndarray] = None
    stride: int = 1

    def __post_init__(self):
        if self.weights.ndim != 4:
            raise InvalidInputError(f"Convolution weights are out x in x kh x kw, got {self.weights.shape}")
        if self.bias is not None and self.bias.shape != (self.weights.shape[0],):
            raise InvalidInputError(f"Bias shape {self.bias.shape} does not match {self.weights.shape[0]} outputs")
        if self.stride < 1:
            raise InvalidInputError(f"Stride must be positive, got {self.stride}")

    @property
    def out_channels(self) -> int:
        return self.weights.shape[0]

    @property
    def in_channels(self) -> int:
        return self.weights.shape[1]

    @property
    def kernel_h(self) -> int:
        return self.weights.shape[2]

    @property
    def kernel_w(self) -> int:
        return self.weights.shape[3]


def pad(x: Tensor, spec: PaddingSpec) -> Tensor:
    """
    Pad a tensor according to ``spec``.

    zero fills the border with 0; ring copies the rightmost columns to the left
    border and vice versa; neighbor takes the rightmost ``pad_left`` columns of
    ``left_buffer`` and the leftmost ``pad_right`` columns of ``right_buffer``.
    The top and bottom borders are zero in every mode.
    """
    x = as_tensor(x)
    spec.validate(x)
    c, h, w = x.shape
    if spec.mode == "zero" or (spec.pad_left == 0 and spec.pad_right == 0):
        left = np.zeros((c, h, spec.pad_left), dtype=np.float32)
        right = np.zeros((c, h, spec.pad_right), dtype=np.float32)
    elif spec.mode == "ring":
        left = np.take(x, np.arange(w - spec.pad_left, w) % w, axis=2)
        right = np.take(x, np.arange(spec.pad_right) % w, axis=2)
    else:
        left = spec.left_buffer[:, :, spec.left_buffer.shape[2] - spec.pad_left :] if spec.pad_left else np.zeros((c, h, 0), np.float32)
        right = spec.right_buffer[:, :, : spec.pad_right] if spec.pad_right else np.zeros((c, h, 0), np.float32)
    row = np.concatenate([left, x, right], axis=2)
    if spec.pad_top == 0 and spec.pad_bottom == 0:
        return np.ascontiguousarray(row, dtype=np.float32)
    return np.pad(row, ((0, 0), (spec.pad_top, spec.pad_bottom), (0, 0)), mode="constant").astype(np.float32, copy=False)


def _output_size(size: int, before: int, after: int, kernel: int, stride: int, axis: str) -> int:
    span = size + before + after - kernel
    if span < 0:
        raise InvalidInputError(f"Kernel of {kernel} does not fit padded {axis} of {size + before + after}")
    return span // stride + 1


def _windows(padded: Tensor, kh: int, kw: int, stride: int) -> np.ndarray:
    """Strided kernel windows: channels x out_h x out_w x kh x kw (a view)."""
    view = sliding_window_view(padded, (kh, kw), axis=(1, 2))
    return view[:, ::stride, ::stride]


def conv2d(x: Tensor, p: ConvParams, spec: PaddingSpec) -> Tensor:
    """
    2-D cross-correlation with pluggable horizontal padding.

    Output size per axis is (size + pad_before + pad_after - kernel) // stride + 1.
    Repeated calls on the same machine and BLAS build give bit-identical results.
    """
    x = as_tensor(x)
    if x.shape[0] != p.in_channels:
        raise InvalidInputError(f"conv2d expects {p.in_channels} input channels, got {x.shape[0]}")
    out_h = _output_size(x.shape[1], spec.pad_top, spec.pad_bottom, p.kernel_h, p.stride, "height")
    out_w = _output_size(x.shape[2], spec.pad_left, spec.pad_right, p.kernel_w, p.stride, "width")
    padded = pad(x, spec)
    cols = _windows(padded, p.kernel_h, p.kernel_w, p.stride)[:, :out_h, :out_w]
    out = np.tensordot(p.weights.astype(np.float32, copy=False), cols, axes=([1, 2, 3], [0, 3, 4]))
    if p.bias is not None:
        out += p.bias.astype(np.float32, copy=False)[:, None, None]
    return _finite(np.ascontiguousarray(out, dtype=np.float32), "conv2d")


def batchnorm_inference(
    x: Tensor,
    scale: np.ndarray,
    shift: np.ndarray,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    epsilon: float = 1e-5,
) -> Tensor:
    """Per-channel (x - mean) / sqrt(var + eps) * scale + shift."""
    x = as_tensor(x)
    c = x.shape[0]
    for name, arr in (("scale", scale), ("shift", shift), ("running_mean", running_mean), ("running_var", running_var)):
        if np.shape(arr) != (c,):
            raise InvalidInputError(f"batchnorm {name} has shape {np.shape(arr)}, expected ({c},)")
    if np.any(np.asarray(running_var) < 0):
        raise InvalidInputError("batchnorm running_var must be non-negative")
    gain = (np.asarray(scale, np.float32) / np.sqrt(np.asarray(running_var, np.float32) + np.float32(epsilon))).astype(np.float32)
    out = (x - np.asarray(running_mean, np.float32)[:, None, None]) * gain[:, None, None] + np.asarray(shift, np.float32)[:, None, None]
    return _finite(out.astype(np.float32, copy=False), "batchnorm_inference")


def relu(x: Tensor) -> Tensor:
    return np.maximum(as_tensor(x), np.float32(0.0))


def sigmoid(x: Tensor) -> Tensor:
    x = np.asarray(x, dtype=np.float32)
    # split by sign so large magnitudes never overflow exp
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise InvalidInputError(f"add shape mismatch {a.shape} vs {b.shape}")
    return _finite(a + b, "add")


def scale_channels(x: Tensor, weights: np.ndarray) -> Tensor:
    """Multiply every spatial position of channel c by weights[c]."""
    x = as_tensor(x)
    weights = np.asarray(weights, dtype=np.float32)
    if weights.shape != (x.shape[0],):
        raise InvalidInputError(f"scale_channels needs {x.shape[0]} weights, got shape {weights.shape}")
    return x * weights[:, None, None]


def maxpool2d(x: Tensor, kernel: int, stride: int, spec: PaddingSpec) -> Tensor:
    x = as_tensor(x)
    out_h = _output_size(x.shape[1], spec.pad_top, spec.pad_bottom, kernel, stride, "height")
    out_w = _output_size(x.shape[2], spec.pad_left, spec.pad_right, kernel, stride, "width")
    win = _windows(pad(x, spec), kernel, kernel, stride)[:, :out_h, :out_w]
    return np.ascontiguousarray(win.max(axis=(3, 4)), dtype=np.float32)


def global_avg_pool(x: Tensor) -> np.ndarray:
    """Per-channel mean over all spatial positions."""
    x = as_tensor(x)
    if x.shape[1] * x.shape[2] == 0:
        raise InvalidInputError("global_avg_pool of an empty tensor")
    return x.mean(axis=(1, 2), dtype=np.float32)


def _bins(size: int, count: int) -> List[Tuple[int, int]]:
    return [((i * size) // count, -((-(i + 1) * size) // count)) for i in range(count)]


def adaptive_avg_pool(x: Tensor, out_h: int, out_w: int) -> Tensor:
    """
    Average-pool to an out_h x out_w grid.

    Bin i along an axis of extent n covers [floor(i*n/g), ceil((i+1)*n/g)).
    """
    x = as_tensor(x)
    if out_h < 1 or out_w < 1:
        raise InvalidInputError(f"Pooling grid must be positive, got {out_h}x{out_w}")
    if x.shape[1] == 0 or x.shape[2] == 0:
        raise InvalidInputError("adaptive_avg_pool of an empty tensor")
    out = np.empty((x.shape[0], out_h, out_w), dtype=np.float32)
    for i, (r0, r1) in enumerate(_bins(x.shape[1], out_h)):
        for j, (c0, c1) in enumerate(_bins(x.shape[2], out_w)):
            out[:, i, j] = x[:, r0:r1, c0:c1].mean(axis=(1, 2), dtype=np.float32)
    return out


def ring_box_mean(x: Tensor, window: int) -> Tensor:
    """
    Horizontal circular moving average.

    Output column j averages columns (j - window // 2 + t) mod width for
    t in [0, window); the summation order is fixed relative to the window, so
    the result commutes exactly with circular column shifts.
    """
    x = as_tensor(x)
    if window < 1:
        raise InvalidInputError(f"Window must be positive, got {window}")
    acc = np.zeros_like(x)
    for t in range(window):
        acc += np.roll(x, window // 2 - t, axis=2)
    return acc / np.float32(window)


def _resample_axis(size_in: int, size_out: int, wrap: bool):
    """Source indices and weights for align-corners=false linear resampling."""
    src = (np.arange(size_out, dtype=np.float64) + 0.5) * (size_in / size_out) - 0.5
    if wrap:
        lo = np.floor(src)
        frac = src - lo
        i0 = np.mod(lo.astype(np.int64), size_in)
        i1 = np.mod(i0 + 1, size_in)
    else:
        src = np.clip(src, 0.0, size_in - 1)
        i0 = np.floor(src).astype(np.int64)
        i1 = np.minimum(i0 + 1, size_in - 1)
        frac = src - i0
    return i0, i1, frac.astype(np.float32)


def bilinear_upsample(x: Tensor, out_h: int, out_w: int, wrap: bool = False) -> Tensor:
    """
    Bilinear resampling with the align-corners=false convention.

    Output pixel centres map to source coordinates (dst + 0.5) * in / out - 0.5.
    Vertically (and horizontally unless ``wrap``) coordinates are clamped to the
    valid range; with ``wrap`` the width axis is periodic. Works for both
    up- and down-sizing.
    """
    x = as_tensor(x)
    if out_h < 1 or out_w < 1:
        raise InvalidInputError(f"Output size must be positive, got {out_h}x{out_w}")
    r0, r1, fr = _resample_axis(x.shape[1], out_h, wrap=False)
    c0, c1, fc = _resample_axis(x.shape[2], out_w, wrap=wrap)
    rows = x[:, r0, :] * (1.0 - fr)[None, :, None] + x[:, r1, :] * fr[None, :, None]
    out = rows[:, :, c0] * (1.0 - fc)[None, None, :] + rows[:, :, c1] * fc[None, None, :]
    return np.ascontiguousarray(out, dtype=np.float32)


def concat_channels(tensors: Sequence[Tensor]) -> Tensor:
    if not tensors:
        raise InvalidInputError("concat_channels of an empty list")
    shapes = {t.shape[1:] for t in tensors}
    if len(shapes) != 1:
        raise InvalidInputError(f"concat_channels needs equal heights and widths, got {sorted(shapes)}")
    return np.concatenate([as_tensor(t) for t in tensors], axis=0)


def concat_width(tensors: Sequence[Tensor]) -> Tensor:
    if not tensors:
        raise InvalidInputError("concat_width of an empty list")
    shapes = {t.shape[:2] for t in tensors}
    if len(shapes) != 1:
        raise InvalidInputError(f"concat_width needs equal channels and heights, got {sorted(shapes)}")
    return np.concatenate([as_tensor(t) for t in tensors], axis=2)


def slice_columns(x: Tensor, start: int, width: int) -> Tensor:
    """Circular column window [start, start + width) of x."""
    x = as_tensor(x)
    idx = np.mod(np.arange(start, start + width), x.shape[2])
    return np.ascontiguousarray(np.take(x, idx, axis=2))


def elementwise_max(a: Tensor, b: Tensor) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.shape != b.shape:
        raise InvalidInputError(f"elementwise_max shape mismatch {a.shape} vs {b.shape}")
    return np.maximum(a, b)


def linear(vector: np.ndarray, weight: np.ndarray, bias: Optional[np.ndarray] = None) -> np.ndarray:
    """weight @ vector + bias for a weight matrix of shape out x in."""
    vector = np.asarray(vector, dtype=np.float32)
    weight = np.asarray(weight, dtype=np.float32)
    if weight.ndim != 2 or vector.shape != (weight.shape[1],):
        raise InvalidInputError(f"linear: weight {weight.shape} incompatible with vector {vector.shape}")
    out = weight @ vector
    if bias is not None:
        bias = np.asarray(bias, dtype=np.float32)
        if bias.shape != (weight.shape[0],):
            raise InvalidInputError(f"linear: bias shape {bias.shape}, expected ({weight.shape[0]},)")
        out = out + bias
    return _finite(out.astype(np.float32, copy=False), "linear")


def argmax_channels(x: Tensor) -> np.ndarray:
    """Per-pixel index of the largest channel (ties resolve to the lowest index)."""
    x = as_tensor(x)
    return np.argmax(x, axis=0)


def softmax_channels(x: Tensor) -> Tensor:
    x = as_tensor(x)
    shifted = x - x.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    return (e / e.sum(axis=0, keepdims=True)).astype(np.float32)
