import numpy as np
import pytest

import kernel_oracles as oracle
from ds_pass import tensor_core as tc
from ds_pass.errors import InvalidInputError, InvariantError
from ds_pass.swaftnet.layers import LinearParams, SEParams, se_block
from ds_pass.tensor_core import ConvParams, PaddingSpec

TRIALS = 100


def row(values):
    return np.asarray(values, dtype=np.float32).reshape(1, 1, -1)


def test_ring_convolution_wraps_around():
    p = ConvParams(np.ones((1, 1, 1, 3), dtype=np.float32))
    spec = PaddingSpec(mode="ring", pad_left=1, pad_right=1)
    out = tc.conv2d(row([1, 2, 3, 4]), p, spec)
    np.testing.assert_array_equal(out[0, 0], [7, 6, 9, 8])


def test_zero_convolution_fills_border():
    p = ConvParams(np.ones((1, 1, 1, 3), dtype=np.float32))
    out = tc.conv2d(row([1, 2, 3, 4]), p, PaddingSpec(mode="zero", pad_left=1, pad_right=1))
    np.testing.assert_array_equal(out[0, 0], [3, 6, 9, 7])


def test_neighbor_padding_takes_buffer_edges():
    spec = PaddingSpec("neighbor", 2, 1, 0, 0, left_buffer=row([10, 20, 30]), right_buffer=row([40, 50]))
    padded = tc.pad(row([1, 2, 3]), spec)
    np.testing.assert_array_equal(padded[0, 0], [20, 30, 1, 2, 3, 40])


def test_vertical_padding_is_zero_in_every_mode():
    x = np.arange(6, dtype=np.float32).reshape(1, 2, 3) + 1
    padded = tc.pad(x, PaddingSpec.uniform("ring", 1))
    assert padded.shape == (1, 4, 5)
    assert not padded[0, 0].any() and not padded[0, -1].any()
    np.testing.assert_array_equal(padded[0, 1], [3, 1, 2, 3, 1])


def test_neighbor_padding_reproduces_ring_on_halves(rng):
    x = rng.normal(size=(2, 5, 8)).astype(np.float32)
    p = ConvParams(rng.normal(size=(3, 2, 3, 3)).astype(np.float32))
    full = tc.conv2d(x, p, PaddingSpec.uniform("ring", 1))
    left, right = x[:, :, :4], x[:, :, 4:]
    spec_left = PaddingSpec("neighbor", 1, 1, 1, 1, left_buffer=right, right_buffer=right)
    spec_right = PaddingSpec("neighbor", 1, 1, 1, 1, left_buffer=left, right_buffer=left)
    halves = np.concatenate([tc.conv2d(left, p, spec_left), tc.conv2d(right, p, spec_right)], axis=2)
    np.testing.assert_allclose(halves, full, rtol=1e-6, atol=1e-6)


def test_neighbor_padding_requires_buffers():
    with pytest.raises(InvalidInputError):
        tc.pad(row([1, 2, 3]), PaddingSpec("neighbor", 1, 1))
    with pytest.raises(InvalidInputError):
        tc.pad(row([1, 2, 3]), PaddingSpec("neighbor", 2, 0, left_buffer=row([1])))


@pytest.mark.parametrize("trial", range(TRIALS))
def test_conv2d_matches_naive_loops(trial):
    rng = np.random.default_rng(trial)
    cin, cout = rng.integers(1, 5, size=2)
    h, w = rng.integers(3, 11, size=2)
    kh, kw = rng.choice([1, 3], size=2)
    stride = int(rng.integers(1, 3))
    mode = str(rng.choice(["zero", "ring"]))
    pads = tuple(int(v) for v in rng.integers(0, 2, size=4))
    x = rng.normal(size=(cin, h, w)).astype(np.float32)
    weights = rng.normal(size=(cout, cin, kh, kw)).astype(np.float32)
    bias = rng.normal(size=cout).astype(np.float32) if trial % 2 else None
    top, bottom, left, right = pads
    spec = PaddingSpec(mode, left, right, top, bottom)

    out = tc.conv2d(x, ConvParams(weights, bias, stride), spec)
    expected = oracle.conv2d(x, weights, bias, stride, pads, mode)
    assert out.dtype == np.float32
    np.testing.assert_allclose(out, expected, rtol=1e-5, atol=1e-5)


def test_conv2d_output_size_formula():
    x = np.zeros((1, 16, 16), dtype=np.float32)
    p = ConvParams(np.zeros((2, 1, 7, 7), dtype=np.float32), stride=2)
    assert tc.conv2d(x, p, PaddingSpec.uniform("zero", 3)).shape == (2, 8, 8)


def test_conv2d_repeats_bit_identically(rng):
    x = rng.normal(size=(8, 16, 16)).astype(np.float32)
    p = ConvParams(rng.normal(size=(8, 8, 3, 3)).astype(np.float32), rng.normal(size=8).astype(np.float32))
    first = tc.conv2d(x, p, PaddingSpec.uniform("ring", 1))
    for _ in range(3):
        assert tc.conv2d(x.copy(), p, PaddingSpec.uniform("ring", 1)).tobytes() == first.tobytes()


def test_conv2d_rejects_channel_mismatch():
    p = ConvParams(np.zeros((1, 2, 3, 3), dtype=np.float32))
    with pytest.raises(InvalidInputError):
        tc.conv2d(np.zeros((3, 4, 4), dtype=np.float32), p, PaddingSpec.uniform("zero", 1))


def test_non_finite_output_is_an_invariant_violation():
    p = ConvParams(np.full((1, 1, 1, 1), np.inf, dtype=np.float32))
    with pytest.raises(InvariantError):
        tc.conv2d(np.ones((1, 2, 2), dtype=np.float32), p, PaddingSpec())


def test_batchnorm_matches_naive_loops():
    for trial in range(TRIALS):
        rng = np.random.default_rng(1000 + trial)
        c, h, w = rng.integers(1, 9, size=3)
        x = rng.normal(size=(c, h, w)).astype(np.float32)
        scale, shift, mean = (rng.normal(size=c).astype(np.float32) for _ in range(3))
        var = rng.uniform(0.1, 2.0, size=c).astype(np.float32)
        out = tc.batchnorm_inference(x, scale, shift, mean, var)
        np.testing.assert_allclose(out, oracle.batchnorm(x, scale, shift, mean, var), rtol=1e-5, atol=1e-5)


def test_batchnorm_validates_parameter_shapes():
    x = np.zeros((2, 2, 2), dtype=np.float32)
    ones = np.ones(2, dtype=np.float32)
    with pytest.raises(InvalidInputError):
        tc.batchnorm_inference(x, ones, ones, ones, np.ones(3, dtype=np.float32))
    with pytest.raises(InvalidInputError):
        tc.batchnorm_inference(x, ones, ones, ones, -ones)


def test_bilinear_upsample_of_a_ramp_matches_closed_form():
    x = np.array([[[0, 1], [2, 3]]], dtype=np.float32)
    out = tc.bilinear_upsample(x, 4, 4)
    s = np.array([0.0, 0.25, 0.75, 1.0])
    expected = 2 * s[:, None] + s[None, :]
    np.testing.assert_allclose(out[0], expected, atol=1e-6)


def test_bilinear_matches_naive_loops():
    for trial in range(TRIALS):
        rng = np.random.default_rng(2000 + trial)
        c = int(rng.integers(1, 4))
        h, w = rng.integers(1, 7, size=2)
        out_h, out_w = rng.integers(1, 13, size=2)
        wrap = bool(trial % 2)
        x = rng.normal(size=(c, h, w)).astype(np.float32)
        out = tc.bilinear_upsample(x, out_h, out_w, wrap=wrap)
        np.testing.assert_allclose(out, oracle.bilinear(x, out_h, out_w, wrap), rtol=1e-5, atol=1e-5)


def test_wrapped_upsampling_commutes_with_circular_shifts(rng):
    x = rng.normal(size=(2, 3, 8)).astype(np.float32)
    shifted = tc.bilinear_upsample(np.roll(x, 1, axis=2), 6, 16, wrap=True)
    np.testing.assert_array_equal(shifted, np.roll(tc.bilinear_upsample(x, 6, 16, wrap=True), 2, axis=2))


def test_maxpool_matches_naive_loops():
    for trial in range(TRIALS):
        rng = np.random.default_rng(3000 + trial)
        c = int(rng.integers(1, 5))
        h, w = rng.integers(3, 12, size=2)
        stride = int(rng.integers(1, 3))
        pad = int(rng.integers(0, 2))
        mode = "ring" if trial % 2 else "zero"
        x = rng.normal(size=(c, h, w)).astype(np.float32)
        out = tc.maxpool2d(x, 3, stride, PaddingSpec.uniform(mode, pad))
        np.testing.assert_allclose(out, oracle.maxpool(x, 3, stride, pad, mode), rtol=1e-6)


def test_adaptive_pool_matches_naive_loops():
    for trial in range(TRIALS):
        rng = np.random.default_rng(4000 + trial)
        c = int(rng.integers(1, 5))
        h, w = rng.integers(1, 10, size=2)
        out_h, out_w = rng.integers(1, 9, size=2)
        x = rng.normal(size=(c, h, w)).astype(np.float32)
        out = tc.adaptive_avg_pool(x, out_h, out_w)
        np.testing.assert_allclose(out, oracle.adaptive_avg_pool(x, out_h, out_w), rtol=1e-5, atol=1e-6)


def test_adaptive_pool_bins_overlap_when_uneven():
    x = row([1, 2, 3, 4, 5])
    np.testing.assert_allclose(tc.adaptive_avg_pool(x, 1, 2)[0, 0], [2.0, 4.0])


def test_se_block_matches_naive_loops():
    for trial in range(TRIALS):
        rng = np.random.default_rng(5000 + trial)
        c = int(rng.integers(1, 9))
        hidden = int(rng.integers(1, 5))
        h, w = rng.integers(1, 9, size=2)
        x = rng.normal(size=(c, h, w)).astype(np.float32)
        w1 = rng.normal(size=(hidden, c)).astype(np.float32)
        b1 = rng.normal(size=hidden).astype(np.float32)
        w2 = rng.normal(size=(c, hidden)).astype(np.float32)
        b2 = rng.normal(size=c).astype(np.float32)
        out = se_block(x, SEParams(LinearParams(w1, b1), LinearParams(w2, b2)))
        np.testing.assert_allclose(out, oracle.squeeze_excite(x, w1, b1, w2, b2), rtol=1e-5, atol=1e-6)


def test_ring_box_mean_commutes_with_circular_shifts(rng):
    x = rng.normal(size=(3, 2, 9)).astype(np.float32)
    for window in (1, 2, 5, 9):
        out = tc.ring_box_mean(np.roll(x, 4, axis=2), window)
        np.testing.assert_array_equal(out, np.roll(tc.ring_box_mean(x, window), 4, axis=2))


def test_ring_box_mean_over_full_width_is_the_row_mean(rng):
    x = rng.normal(size=(1, 2, 6)).astype(np.float32)
    out = tc.ring_box_mean(x, 6)
    np.testing.assert_allclose(out, np.broadcast_to(x.mean(axis=2, keepdims=True), x.shape), rtol=1e-5, atol=1e-6)


def test_slice_columns_wraps():
    out = tc.slice_columns(row([0, 1, 2, 3, 4]), -2, 4)
    np.testing.assert_array_equal(out[0, 0], [3, 4, 0, 1])


def test_concat_and_max_validate_shapes():
    a = np.zeros((1, 2, 3), dtype=np.float32)
    with pytest.raises(InvalidInputError):
        tc.concat_width([a, np.zeros((1, 3, 3), dtype=np.float32)])
    with pytest.raises(InvalidInputError):
        tc.concat_channels([a, np.zeros((1, 2, 4), dtype=np.float32)])
    with pytest.raises(InvalidInputError):
        tc.elementwise_max(a, np.zeros((1, 2, 4), dtype=np.float32))
    assert tc.concat_width([a, a]).shape == (1, 2, 6)


def test_sigmoid_is_stable_for_large_inputs():
    out = tc.sigmoid(np.array([-1000.0, 0.0, 1000.0], dtype=np.float32))
    assert np.all(np.isfinite(out))
    np.testing.assert_allclose(out, [0.0, 0.5, 1.0])


def test_softmax_and_argmax(rng):
    x = rng.normal(size=(4, 3, 5)).astype(np.float32)
    np.testing.assert_allclose(tc.softmax_channels(x).sum(axis=0), 1.0, rtol=1e-5)
    ties = np.zeros((3, 1, 1), dtype=np.float32)
    assert tc.argmax_channels(ties)[0, 0] == 0


def test_as_tensor_requires_three_dimensions():
    with pytest.raises(InvalidInputError):
        tc.as_tensor(np.zeros((2, 2)))
