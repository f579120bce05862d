"""Tensor value type, allocation counter, and forward op semantics."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from focalsep import ops
from focalsep.errors import (ConfigError, NumericError, ShapeError,
                             ShortInputError)
from focalsep.tensor import (Tensor, eye, full, full_like, live_elements,
                             ones, peak_elements, reset_peak_elements, zeros)


# ---------------------------------------------------------------------------
# Tensor value type


def test_construction_copies_and_reports_shape():
    src = np.arange(6, dtype=np.float64).reshape(2, 3)
    t = Tensor(src)
    src[0, 0] = 99.0
    assert t.shape == (2, 3)
    assert t.ndim == 2
    assert t.size == 6
    assert t.data[0, 0] == 0.0


def test_construction_from_nested_lists_and_scalars():
    assert Tensor([[1, 2], [3, 4]]).shape == (2, 2)
    assert Tensor(5.0).shape == ()
    assert Tensor(5.0).item() == 5.0
    assert float(Tensor([2.5])) == 2.5


def test_non_finite_construction_rejected():
    with pytest.raises(NumericError):
        Tensor([1.0, np.nan])
    with pytest.raises(NumericError):
        Tensor([1.0, np.inf])


def test_item_requires_single_element():
    with pytest.raises(ValueError):
        Tensor([1.0, 2.0]).item()


def test_assign_updates_in_place_and_validates():
    t = zeros(2, 2)
    t.assign_(np.ones((2, 2)))
    np.testing.assert_array_equal(t.data, np.ones((2, 2)))
    with pytest.raises(ValueError):
        t.assign_(np.ones(3))
    with pytest.raises(NumericError):
        t.assign_(np.full((2, 2), np.nan))


def test_helpers_build_expected_values():
    np.testing.assert_array_equal(zeros(2, 3).data, np.zeros((2, 3)))
    np.testing.assert_array_equal(ones(4).data, np.ones(4))
    np.testing.assert_array_equal(full((2,), 7.0).data, [7.0, 7.0])
    np.testing.assert_array_equal(full_like(zeros(3), 2.0).data, [2.0] * 3)
    np.testing.assert_array_equal(eye(2).data, np.eye(2))


def test_arithmetic_sugar_matches_ops_and_coerces_scalars():
    a = Tensor([1.0, 2.0])
    b = Tensor([3.0, 5.0])
    np.testing.assert_array_equal((a + b).data, [4.0, 7.0])
    np.testing.assert_array_equal((a - b).data, [-2.0, -3.0])
    np.testing.assert_array_equal((a * b).data, [3.0, 10.0])
    np.testing.assert_array_equal((b / a).data, [3.0, 2.5])
    np.testing.assert_array_equal((2.0 + a).data, [3.0, 4.0])
    np.testing.assert_array_equal((10.0 - a).data, [9.0, 8.0])
    np.testing.assert_array_equal((3.0 * a).data, [3.0, 6.0])
    np.testing.assert_array_equal((2.0 / a).data, [2.0, 1.0])
    np.testing.assert_array_equal((-a).data, [-1.0, -2.0])
    m = Tensor([[1.0, 0.0], [0.0, 1.0]])
    np.testing.assert_array_equal((m @ m).data, np.eye(2))


# ---------------------------------------------------------------------------
# live-element accounting


def test_counter_tracks_live_elements_and_peak():
    base = live_elements()
    reset_peak_elements()
    t = zeros(10, 10)
    assert live_elements() == base + 100
    assert peak_elements() >= base + 100
    u = zeros(5)
    assert live_elements() == base + 105
    del t
    assert live_elements() == base + 5
    del u
    assert live_elements() == base
    # peak survives the frees until it is reset
    assert peak_elements() >= base + 105
    assert reset_peak_elements() == base
    assert peak_elements() == base


def test_counter_counts_op_results():
    base = live_elements()
    a, b = ones(4), ones(4)
    out = ops.add(a, b)
    assert live_elements() == base + 12  # two operands + result
    del out
    assert live_elements() == base + 8
    del a, b
    assert live_elements() == base


# ---------------------------------------------------------------------------
# matmul


def test_matmul_identity():
    b = Tensor([[3.0, 4.0], [5.0, 6.0]])
    np.testing.assert_array_equal(ops.matmul(eye(2), b).data, b.data)


def test_matmul_hand_example():
    out = ops.matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]]))
    np.testing.assert_array_equal(out.data, [[11.0]])


def test_matmul_reports_both_shapes_on_mismatch():
    with pytest.raises(ShapeError) as exc:
        ops.matmul(zeros(2, 3), zeros(4, 2))
    assert "(2, 3)" in str(exc.value) and "(4, 2)" in str(exc.value)
    with pytest.raises(ShapeError):
        ops.matmul(zeros(3), zeros(3, 2))


def test_matmul_associativity_bound():
    rng = np.random.default_rng(11)
    for _ in range(10):
        m, k, l, n = rng.integers(1, 65, size=4)
        a = rng.standard_normal((m, k))
        b = rng.standard_normal((k, l))
        c = rng.standard_normal((l, n))
        left = ops.matmul(ops.matmul(Tensor(a), Tensor(b)), Tensor(c)).data
        right = ops.matmul(Tensor(a), ops.matmul(Tensor(b), Tensor(c))).data
        bound = 1e-9 * np.linalg.norm(a) * np.linalg.norm(b) * np.linalg.norm(c)
        assert np.max(np.abs(left - right)) <= bound


# ---------------------------------------------------------------------------
# softmax_rows


def test_softmax_rows_examples():
    out = ops.softmax_rows(Tensor([[0.0, 0.0]]))
    np.testing.assert_allclose(out.data, [[0.5, 0.5]], atol=1e-15)
    out = ops.softmax_rows(Tensor([[np.log(2.0), 0.0]]))
    np.testing.assert_allclose(out.data, [[2.0 / 3.0, 1.0 / 3.0]], atol=1e-15)


def test_softmax_rows_large_logits_stable():
    out = ops.softmax_rows(Tensor([[1000.0, 0.0]]))
    np.testing.assert_allclose(out.data, [[1.0, 0.0]], atol=1e-300)


def test_softmax_rows_requires_matrix():
    with pytest.raises(ShapeError):
        ops.softmax_rows(Tensor([1.0, 2.0]))


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_softmax_rows_sum_and_shift_invariance(seed):
    rng = np.random.default_rng(seed)
    s = rng.standard_normal((4, 6)) * rng.uniform(0.1, 50.0)
    y = ops.softmax_rows(Tensor(s))
    np.testing.assert_allclose(y.data.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(y.data >= 0.0)
    shift = rng.standard_normal((4, 1)) * 10.0
    y2 = ops.softmax_rows(Tensor(s + shift))
    np.testing.assert_allclose(y2.data, y.data, atol=1e-12)


# ---------------------------------------------------------------------------
# depthwise_conv1d


def test_conv_delta_kernel_is_identity_exact():
    rng = np.random.default_rng(0)
    x = rng.standard_normal((9, 3))
    delta = np.zeros((3, 5))
    delta[:, 2] = 1.0
    out = ops.depthwise_conv1d(Tensor(x), Tensor(delta))
    np.testing.assert_array_equal(out.data, x)


def test_conv_averaging_constant_interior():
    x = np.full((7, 2), 3.0)
    kern = np.full((2, 3), 1.0 / 3.0)
    out = ops.depthwise_conv1d(Tensor(x), Tensor(kern)).data
    np.testing.assert_allclose(out[1:-1], 3.0, atol=1e-12)
    # boundary rows see one zero pad sample
    np.testing.assert_allclose(out[0], 2.0, atol=1e-12)
    np.testing.assert_allclose(out[-1], 2.0, atol=1e-12)


def test_conv_hand_example():
    out = ops.depthwise_conv1d(Tensor([[1.0], [2.0], [3.0]]),
                               Tensor([[1.0, 0.0, -1.0]]))
    np.testing.assert_array_equal(out.data, [[-2.0], [-2.0], [2.0]])


def test_conv_channels_stay_independent():
    rng = np.random.default_rng(1)
    x = rng.standard_normal((8, 2))
    kern = np.zeros((2, 3))
    kern[0] = rng.standard_normal(3)  # channel 1 kernel stays zero
    out = ops.depthwise_conv1d(Tensor(x), Tensor(kern)).data
    np.testing.assert_array_equal(out[:, 1], np.zeros(8))
    assert np.any(out[:, 0] != 0.0)


def test_conv_even_kernel_rejected():
    with pytest.raises(ConfigError):
        ops.depthwise_conv1d(zeros(4, 2), zeros(2, 4))
    with pytest.raises(ShapeError):
        ops.depthwise_conv1d(zeros(4, 2), zeros(3, 3))


# ---------------------------------------------------------------------------
# layer_norm


def test_layer_norm_constant_row_maps_to_zero():
    out = ops.layer_norm(Tensor([[5.0, 5.0, 5.0]]), ones(3), zeros(3))
    np.testing.assert_allclose(out.data, 0.0, atol=1e-12)


def test_layer_norm_two_point_row():
    out = ops.layer_norm(Tensor([[1.0, -1.0]]), ones(2), zeros(2))
    expect = 1.0 / np.sqrt(1.0 + 1e-5)
    np.testing.assert_allclose(out.data, [[expect, -expect]], atol=1e-12)


def test_layer_norm_affine_collapse():
    out = ops.layer_norm(Tensor([[3.0, -9.0]]), zeros(2), full((2,), 7.0))
    np.testing.assert_array_equal(out.data, [[7.0, 7.0]])


def test_layer_norm_normalizes_rows():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((5, 16)) * 4.0 + 2.0
    out = ops.layer_norm(Tensor(x), ones(16), zeros(16)).data
    assert np.max(np.abs(out.mean(axis=1))) < 1e-10
    np.testing.assert_allclose(out.var(axis=1), 1.0, atol=1e-4)


def test_layer_norm_rejects_bad_affine_shapes():
    with pytest.raises(ShapeError):
        ops.layer_norm(zeros(2, 3), ones(2), zeros(3))


# ---------------------------------------------------------------------------
# elementwise and numeric guards


def test_relu_and_minimum_values():
    np.testing.assert_array_equal(
        ops.relu(Tensor([-1.0, 0.0, 2.0])).data, [0.0, 0.0, 2.0])
    np.testing.assert_array_equal(
        ops.minimum_scalar(Tensor([1.0, 5.0]), 3.0).data, [1.0, 3.0])


def test_sigmoid_and_silu_stable_at_extremes():
    s = ops.sigmoid(Tensor([-1000.0, 0.0, 1000.0])).data
    np.testing.assert_allclose(s, [0.0, 0.5, 1.0], atol=1e-300)
    g = ops.silu(Tensor([-1000.0, 0.0, 1000.0])).data
    np.testing.assert_allclose(g, [0.0, 0.0, 1000.0], atol=1e-12)


def test_division_by_zero_is_an_error():
    with pytest.raises(NumericError):
        ops.div(Tensor([1.0]), Tensor([0.0]))


def test_log_and_sqrt_domain_errors():
    with pytest.raises(NumericError):
        ops.log(Tensor([0.0]))
    with pytest.raises(NumericError):
        ops.log(Tensor([-1.0]))
    with pytest.raises(NumericError):
        ops.sqrt(Tensor([-4.0]))
    np.testing.assert_allclose(ops.sqrt(Tensor([4.0])).data, [2.0])
    np.testing.assert_allclose(ops.log(Tensor([np.e])).data, [1.0])


def test_pow_scalar_values():
    np.testing.assert_allclose(
        ops.pow_scalar(Tensor([2.0, 3.0]), 3.0).data, [8.0, 27.0])
    np.testing.assert_allclose(
        ops.pow_scalar(Tensor([4.0]), 0.5).data, [2.0])


def test_broadcasting_binary_ops():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    b = Tensor([[10.0, 20.0]])
    np.testing.assert_array_equal(ops.add(a, b).data, [[11.0, 22.0], [13.0, 24.0]])
    np.testing.assert_array_equal(ops.mul(a, 2.0).data, [[2.0, 4.0], [6.0, 8.0]])


# ---------------------------------------------------------------------------
# reductions and structure


def test_reductions():
    a = Tensor([[1.0, 2.0], [3.0, 4.0]])
    assert ops.sum_all(a).item() == 10.0
    assert ops.sum_all(a).shape == ()
    assert ops.mean_all(a).item() == 2.5
    np.testing.assert_array_equal(ops.row_sum(a).data, [[3.0], [7.0]])
    np.testing.assert_array_equal(ops.col_sum(a).data, [[4.0, 6.0]])
    with pytest.raises(ShapeError):
        ops.row_sum(Tensor([1.0]))
    with pytest.raises(ShapeError):
        ops.col_sum(Tensor([1.0]))


def test_structure_ops_round_trip():
    rng = np.random.default_rng(3)
    a = rng.standard_normal((3, 4))
    t = Tensor(a)
    np.testing.assert_array_equal(ops.transpose(ops.transpose(t)).data, a)
    np.testing.assert_array_equal(ops.reshape(t, (4, 3)).data, a.reshape(4, 3))
    np.testing.assert_array_equal(ops.slice_cols(t, 1, 3).data, a[:, 1:3])
    np.testing.assert_array_equal(ops.narrow0(t, 1, 2).data, a[1:3])
    parts = [ops.slice_cols(t, 0, 2), ops.slice_cols(t, 2, 4)]
    np.testing.assert_array_equal(ops.concat_cols(parts).data, a)


def test_structure_ops_errors():
    with pytest.raises(ShapeError):
        ops.transpose(Tensor([1.0]))
    with pytest.raises(ShapeError):
        ops.reshape(zeros(2, 3), (4, 2))
    with pytest.raises(ShapeError):
        ops.slice_cols(zeros(2, 3), 2, 5)
    with pytest.raises(ShapeError):
        ops.narrow0(zeros(2, 3), 1, 5)
    with pytest.raises(ShapeError):
        ops.concat_cols([zeros(2, 2), zeros(3, 2)])
    with pytest.raises(ShapeError):
        ops.concat_cols([])


# ---------------------------------------------------------------------------
# framing


def test_frame_signal_counts():
    assert ops.frame_signal(zeros(8000), 16, 8).shape == (999, 16)
    assert ops.frame_signal(zeros(16), 16, 8).shape == (1, 16)
    with pytest.raises(ShortInputError):
        ops.frame_signal(zeros(15), 16, 8)
    with pytest.raises(ShapeError):
        ops.frame_signal(zeros(4, 4), 2, 1)
    with pytest.raises(ConfigError):
        ops.frame_signal(zeros(16), 4, 0)


def test_frame_signal_contents():
    w = np.arange(10, dtype=np.float64)
    frames = ops.frame_signal(Tensor(w), 4, 3).data
    np.testing.assert_array_equal(frames, [[0, 1, 2, 3], [3, 4, 5, 6], [6, 7, 8, 9]])


def test_overlap_add_inverts_non_overlapping_frames():
    rng = np.random.default_rng(4)
    w = rng.standard_normal(20)
    frames = ops.frame_signal(Tensor(w), 4, 4)
    back = ops.overlap_add(frames, 4, 20)
    np.testing.assert_array_equal(back.data, w)


def test_overlap_add_averages_overlaps():
    w = np.full(16, 2.0)
    frames = ops.frame_signal(Tensor(w), 4, 2)
    back = ops.overlap_add(frames, 2, 16).data
    np.testing.assert_allclose(back, 2.0, atol=1e-12)


def test_overlap_add_pads_and_truncates():
    frames = Tensor([[1.0, 1.0], [1.0, 1.0]])
    long = ops.overlap_add(frames, 2, 6).data
    np.testing.assert_array_equal(long, [1.0, 1.0, 1.0, 1.0, 0.0, 0.0])
    short = ops.overlap_add(frames, 2, 3).data
    np.testing.assert_array_equal(short, [1.0, 1.0, 1.0])
    with pytest.raises(ShapeError):
        ops.overlap_add(zeros(4), 2, 4)
    with pytest.raises(ConfigError):
        ops.overlap_add(zeros(2, 2), 0, 4)
