from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from sta_video.errors import ConfigError, ContractError, DataError, DimensionError, GradcheckError
from sta_video.numerics import (
    Parameter,
    SeededRng,
    Tensor,
    backward,
    derive_seed,
    exp,
    finite_difference_check,
    gelu,
    layer_norm,
    load_tensor,
    log_softmax,
    matmul,
    no_grad,
    rotate_pairs,
    save_tensor,
    softmax,
    softmax_rows,
    tensor_from_bytes,
    tensor_to_bytes,
)
from sta_video.numerics.rng import ALGORITHM

finite = st.floats(-50, 50, allow_nan=False, allow_infinity=False)


def test_matmul_identity():
    out = matmul(Tensor(np.eye(2)), Tensor([[1.0, 2.0], [3.0, 4.0]]))
    assert np.array_equal(out.data, [[1.0, 2.0], [3.0, 4.0]])


def test_matmul_hand_arithmetic():
    assert matmul(Tensor([[1.0, 2.0]]), Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_against_triple_loop():
    rng = SeededRng(3)
    a, b = rng.normal(size=(5, 7)), rng.normal(size=(7, 3))
    ref = np.zeros((5, 3))
    for i in range(5):
        for j in range(3):
            for k in range(7):
                ref[i, j] += a[i, k] * b[k, j]
    np.testing.assert_allclose(matmul(Tensor(a), Tensor(b)).data, ref, rtol=0, atol=1e-12)


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4, 5\)"):
        matmul(Tensor(np.ones((2, 3))), Tensor(np.ones((4, 5))))


def test_batched_matmul_gradient_matches_numpy():
    rng = SeededRng(5)
    a = Parameter(rng.normal(size=(2, 3, 4)))
    b = Parameter(rng.normal(size=(4, 5)))
    backward(matmul(a, b).sum())
    np.testing.assert_allclose(a.grad, np.broadcast_to(b.data.sum(axis=1), (2, 3, 4)))
    np.testing.assert_allclose(b.grad, np.broadcast_to(a.data.sum(axis=(0, 1))[:, None], (4, 5)))


def test_softmax_examples():
    assert softmax_rows(Tensor([[0.0, 0.0]])).data.tolist() == [[0.5, 0.5]]
    assert softmax_rows(Tensor([[1000.0, 1000.0]])).data.tolist() == [[0.5, 0.5]]
    np.testing.assert_allclose(softmax_rows(Tensor([[math.log(1), math.log(3)]])).data,
                               [[0.25, 0.75]], rtol=0, atol=1e-15)


@given(arrays(np.float64, st.tuples(st.integers(1, 6), st.integers(1, 9)), elements=finite))
def test_softmax_rows_sum_to_one(x):
    p = softmax_rows(Tensor(x)).data
    assert np.all(p >= 0)
    np.testing.assert_allclose(p.sum(axis=-1), 1.0, rtol=0, atol=1e-12)


@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 8)), elements=finite))
def test_log_softmax_is_log_of_softmax(x):
    np.testing.assert_allclose(log_softmax(Tensor(x)).data, np.log(softmax(Tensor(x)).data),
                               atol=1e-9)


def test_layer_norm_examples():
    one, zero = Parameter(np.ones(4)), Parameter(np.zeros(4))
    assert np.array_equal(layer_norm(Tensor(np.full(4, 7.0)), one, zero).data, np.zeros(4))
    out = layer_norm(Tensor([1.0, 3.0]), Parameter(np.ones(2)), Parameter(np.zeros(2)), eps=1e-300)
    np.testing.assert_allclose(out.data, [-1.0, 1.0], atol=1e-15)
    b = np.array([0.5, -2.0, 3.0, 1.0])
    out = layer_norm(Tensor(SeededRng(0).normal(size=(3, 4))), Parameter(np.zeros(4)), Parameter(b))
    assert np.array_equal(out.data, np.broadcast_to(b, (3, 4)))


def test_layer_norm_rejects_single_feature():
    with pytest.raises(ConfigError):
        layer_norm(Tensor([[1.0]]), Parameter(np.ones(1)), Parameter(np.zeros(1)))


@given(arrays(np.float64, st.tuples(st.integers(1, 4), st.integers(2, 16)), elements=finite))
def test_layer_norm_standardizes(x):
    spread = x.max(axis=-1) - x.min(axis=-1)
    x = x[spread > 1e-3]
    if not len(x):
        return
    d = x.shape[-1]
    out = layer_norm(Tensor(x), Parameter(np.ones(d)), Parameter(np.zeros(d)), eps=1e-12).data
    assert np.all(np.abs(out.mean(axis=-1)) <= 1e-10)
    assert np.all(np.abs(out.var(axis=-1) - 1.0) <= 1e-6)


def test_backward_hand_derivative():
    w = Parameter(SeededRng(1).normal(size=(3, 2)))
    x = np.array([[1.0, -2.0, 0.5]])
    backward(matmul(Tensor(x), w).sum())
    assert np.array_equal(w.grad, np.broadcast_to(x.T, (3, 2)))


def test_backward_leaves_unreachable_and_frozen_grads_zero():
    used, unused = Parameter(np.ones(3)), Parameter(np.ones(3))
    frozen = Parameter(np.ones(3), trainable=False)
    backward((used * frozen).sum())
    assert np.array_equal(used.grad, np.ones(3))
    assert not unused.grad.any() and not frozen.grad.any()


def test_backward_requires_scalar():
    with pytest.raises(ContractError):
        backward(Parameter(np.ones(3)) * 2.0)


def test_gradients_accumulate_across_backward_calls():
    p = Parameter(np.array([2.0]))
    backward((p * p).sum())
    backward((p * p).sum())
    assert p.grad.tolist() == [8.0]


def test_no_grad_records_nothing():
    p = Parameter(np.ones(2))
    with no_grad():
        y = (p * 3.0).sum()
    assert not y.requires_grad


def test_tensor_rejects_non_finite():
    with pytest.raises(DataError):
        Tensor([1.0, float("nan")])


def test_gelu_matches_erf_definition():
    x = np.linspace(-4, 4, 41)
    ref = 0.5 * x * (1 + np.array([math.erf(v / math.sqrt(2)) for v in x]))
    np.testing.assert_allclose(gelu(Tensor(x)).data, ref, rtol=0, atol=1e-15)


def test_linear_model_gradcheck_is_exact():
    w = Parameter(np.array([2.0]))
    report = finite_difference_check(lambda: w * 3.0, {"w": w})
    assert report.checks[0].analytic == 3.0
    assert abs(report.checks[0].numeric - 3.0) < 1e-9


def test_gradcheck_every_primitive():
    rng = SeededRng(11)
    a = Parameter(rng.normal(size=(3, 4)))
    b = Parameter(rng.normal(size=(4, 4)))
    g, bias = Parameter(rng.uniform(0.5, 1.5, size=4)), Parameter(rng.normal(size=4))
    theta = rng.uniform(0, 6, size=(3, 4))
    cos, sin = np.cos(theta), np.sin(theta)

    def loss():
        h = layer_norm(matmul(a, b), g, bias)
        h = rotate_pairs(gelu(h), cos, sin)
        s = softmax(h, axis=-1) * exp(h * 0.1)
        return (log_softmax(s / (h * h + 1.0)) * s).sum()

    report = finite_difference_check(loss, {"a": a, "b": b, "g": g, "bias": bias})
    assert report.passed and report.max_rel_err <= 1e-4


def test_gradcheck_negative_control():
    w = Parameter(SeededRng(0).normal(size=(4, 3)))
    x = SeededRng(1).normal(size=(2, 4))

    def loss():
        y = matmul(Tensor(x), w)
        return (y * y).sum()

    backward(loss())
    doubled = {"w": 2.0 * w.grad}
    with pytest.raises(GradcheckError) as info:
        finite_difference_check(loss, {"w": w}, analytic=doubled)
    assert "w[" in str(info.value) and info.value.report.failures


def test_gradcheck_samples_64_coordinates_per_group():
    big = Parameter(SeededRng(2).normal(size=(20, 20)))
    report = finite_difference_check(lambda: (big * big).sum(), {"big": big})
    assert report.per_group()["big"]["coords"] == 64


def test_seeded_rng_is_reproducible():
    a = SeededRng(123).normal(size=10)
    b = SeededRng(123).normal(size=10)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, SeededRng(124).normal(size=10))
    assert ALGORITHM.startswith("philox")


def test_derive_seed_golden():
    # independent oracle: sha256 of "42/init", first 8 bytes little-endian
    assert derive_seed(42, "init") == 8917247130184309467
    assert derive_seed(42, "init") != derive_seed(42, "data")


def test_seeded_rng_golden_draw():
    np.testing.assert_array_equal(SeededRng(7).integers(0, 1000, size=4), [268, 468, 973, 426])


def test_tensor_serialization_roundtrip(tmp_path):
    x = SeededRng(4).normal(size=(2, 3, 4))
    blob = tensor_to_bytes(x)
    assert blob.startswith(b'{"shape":[2,3,4],"dtype":"f64"}\n')
    assert len(blob.split(b"\n", 1)[1]) == 8 * 24
    assert np.array_equal(tensor_from_bytes(blob), x)
    save_tensor(tmp_path / "x.f64", x)
    assert np.array_equal(load_tensor(tmp_path / "x.f64"), x)


def test_tensor_serialization_rejects_truncation():
    with pytest.raises(DataError):
        tensor_from_bytes(tensor_to_bytes(np.ones(3))[:-1])


@settings(max_examples=25)
@given(arrays(np.float64, st.tuples(st.integers(1, 3), st.integers(1, 5)), elements=finite))
def test_serialization_roundtrip_property(x):
    assert np.array_equal(tensor_from_bytes(tensor_to_bytes(x)), x)
