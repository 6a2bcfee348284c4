from __future__ import annotations

import numpy as np
import pytest

from freqdetect import autodiff as ad
from freqdetect.autodiff import (
    GradientTape,
    NonDeterministicFunctionError,
    ShapeError,
    Tensor,
    bilinear_transform,
    conv2d,
    finite_diff_check,
    global_avg_pool,
    matmul,
    relu,
    sigmoid,
    softmax,
    softplus,
    take_element,
    take_slice,
    tensor_mean,
    tensor_sum,
)


def conv2d_bruteforce(x: np.ndarray, w: np.ndarray, stride: int, padding: int) -> np.ndarray:
    """Direct quadruple-loop convolution used as the independent oracle."""
    n, c, h, ww = x.shape
    o, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    oh = (h + 2 * padding - kh) // stride + 1
    ow = (ww + 2 * padding - kw) // stride + 1
    out = np.zeros((n, o, oh, ow))
    for b in range(n):
        for f in range(o):
            for y in range(oh):
                for z in range(ow):
                    acc = 0.0
                    for ch in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                acc += w[f, ch, i, j] * xp[b, ch, y * stride + i, z * stride + j]
                    out[b, f, y, z] = acc
    return out


def test_matmul_identity() -> None:
    rng = np.random.default_rng(0)
    a = rng.normal(size=(3, 4))
    out = matmul(Tensor(np.eye(3)), Tensor(a))
    np.testing.assert_array_equal(out.data, a)


def test_matmul_shape_mismatch_rejected() -> None:
    with pytest.raises(ShapeError):
        matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((2, 3))))


def test_relu_values() -> None:
    out = relu(Tensor([-1.0, 0.0, 2.0]))
    np.testing.assert_array_equal(out.data, [0.0, 0.0, 2.0])


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1), (2, 0)])
def test_conv2d_matches_bruteforce(stride: int, padding: int) -> None:
    rng = np.random.default_rng(7)
    x = rng.normal(size=(2, 3, 5, 5))
    w = rng.normal(size=(4, 3, 3, 3))
    got = conv2d(Tensor(x), Tensor(w), stride=stride, padding=padding)
    want = conv2d_bruteforce(x, w, stride, padding)
    assert np.max(np.abs(got.data - want)) < 1e-12


def test_conv2d_bias_and_channel_mismatch() -> None:
    rng = np.random.default_rng(3)
    x = Tensor(rng.normal(size=(1, 2, 4, 4)))
    w = Tensor(rng.normal(size=(3, 2, 3, 3)))
    b = Tensor(np.array([1.0, -1.0, 0.5]))
    with_bias = conv2d(x, w, b, stride=1, padding=1)
    without = conv2d(x, w, stride=1, padding=1)
    np.testing.assert_allclose(with_bias.data, without.data + b.data[None, :, None, None])
    with pytest.raises(ShapeError):
        conv2d(x, Tensor(rng.normal(size=(3, 5, 3, 3))))


def test_backward_square() -> None:
    x = Tensor(3.0, requires_grad=True)
    with GradientTape() as tape:
        y = x * x
    grads = tape.backward(y)
    assert grads[x].item() == pytest.approx(6.0)


def test_backward_requires_scalar() -> None:
    x = Tensor([1.0, 2.0], requires_grad=True)
    with GradientTape() as tape:
        y = x * x
    with pytest.raises(ShapeError):
        tape.backward(y)


def test_softmax_cross_entropy_gradient_symmetry() -> None:
    # Uniform logits over 2 classes, true label 0: gradient is [-0.5, +0.5].
    logits = Tensor([0.0, 0.0], requires_grad=True)
    with GradientTape() as tape:
        p = softmax(logits, axis=0)
        loss = -ad.log(take_element(p, (0,)))
    grads = tape.backward(loss)
    np.testing.assert_allclose(grads[logits].data, [-0.5, 0.5], atol=1e-12)


def test_fanout_gradients_accumulate() -> None:
    x = Tensor(2.0, requires_grad=True)
    with GradientTape() as tape:
        y = x * x + x * x
    grads = tape.backward(y)
    assert grads[x].item() == pytest.approx(8.0)


def test_gradient_of_sum_is_sum_of_gradients() -> None:
    rng = np.random.default_rng(11)
    x = Tensor(rng.normal(size=(4,)), requires_grad=True)

    def run(fn):
        with GradientTape() as tape:
            loss = fn()
        return tape.backward(loss)[x].data

    g1 = run(lambda: tensor_sum(x * x))
    g2 = run(lambda: tensor_sum(sigmoid(x)))
    g12 = run(lambda: tensor_sum(x * x) + tensor_sum(sigmoid(x)))
    np.testing.assert_allclose(g12, g1 + g2, rtol=1e-12)


def test_broadcast_add_unbroadcasts_gradient() -> None:
    a = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.ones((3,)), requires_grad=True)
    with GradientTape() as tape:
        loss = tensor_sum(a + b)
    grads = tape.backward(loss)
    np.testing.assert_array_equal(grads[a].data, np.ones((2, 3)))
    np.testing.assert_array_equal(grads[b].data, np.full((3,), 2.0))


def test_take_slice_and_element_gradients() -> None:
    x = Tensor(np.arange(12.0).reshape(3, 4), requires_grad=True)
    with GradientTape() as tape:
        loss = tensor_sum(take_slice(x, 1)) + 2.0 * take_element(x, (2, 3))
    grads = tape.backward(loss)
    expected = np.zeros((3, 4))
    expected[1] = 1.0
    expected[2, 3] = 2.0
    np.testing.assert_array_equal(grads[x].data, expected)


def test_bilinear_transform_matches_explicit_matmul() -> None:
    rng = np.random.default_rng(5)
    x = rng.normal(size=(2, 3, 4, 6))
    r = rng.normal(size=(4, 4))
    c = rng.normal(size=(6, 6))
    got = bilinear_transform(Tensor(x), Tensor(r), Tensor(c)).data
    want = np.einsum("ij,bcjk,lk->bcil", r, x, c)
    np.testing.assert_allclose(got, want, atol=1e-12)


def test_global_avg_pool_shape_and_value() -> None:
    x = Tensor(np.arange(16.0).reshape(1, 1, 4, 4))
    out = global_avg_pool(x)
    assert out.shape == (1, 1)
    assert out.data[0, 0] == pytest.approx(7.5)


def test_forward_determinism_bitwise() -> None:
    rng = np.random.default_rng(42)
    x = rng.normal(size=(2, 3, 8, 8))
    w = rng.normal(size=(4, 3, 3, 3))

    def run():
        return conv2d(Tensor(x), Tensor(w), stride=2, padding=1).data

    a, b = run(), run()
    assert np.array_equal(a, b)


def test_finite_diff_linear_is_exact() -> None:
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    c = np.array([0.5, 1.5, -0.25])
    report = finite_diff_check(lambda: tensor_sum(x * Tensor(c)), [("x", x)], eps=1e-5)
    assert report.max_rel_error < 1e-10
    assert report.excluded == 0


def test_finite_diff_quadratic() -> None:
    x = Tensor(np.array([1.0, 2.0]), requires_grad=True)
    report = finite_diff_check(lambda: tensor_sum(x * x), [("x", x)], eps=1e-5)
    assert report.max_rel_error < 1e-8


def test_finite_diff_excludes_relu_kinks() -> None:
    x = Tensor(np.array([0.0]), requires_grad=True)
    report = finite_diff_check(lambda: tensor_sum(relu(x)), [("x", x)], eps=1e-5)
    assert report.excluded == 1
    assert report.checked == 0
    assert report.max_rel_error == 0.0


def test_finite_diff_rejects_nondeterministic_function() -> None:
    x = Tensor(np.array([1.0]), requires_grad=True)
    state = {"flip": 0.0}

    def noisy():
        state["flip"] += 1e-3
        return tensor_sum(x * Tensor(state["flip"]))

    with pytest.raises(NonDeterministicFunctionError):
        finite_diff_check(noisy, [("x", x)])


def test_finite_diff_composite_network() -> None:
    rng = np.random.default_rng(9)
    x = rng.normal(size=(2, 2, 6, 6))
    w1 = Tensor(rng.normal(size=(3, 2, 3, 3)) * 0.5, requires_grad=True)
    b1 = Tensor(rng.normal(size=(3,)) * 0.1, requires_grad=True)
    w2 = Tensor(rng.normal(size=(3, 1)) * 0.5, requires_grad=True)

    def f():
        h = relu(conv2d(Tensor(x), w1, b1, stride=2, padding=1))
        pooled = global_avg_pool(h)
        return tensor_mean(softplus(matmul(pooled, w2)))

    report = finite_diff_check(f, [("w1", w1), ("b1", b1), ("w2", w2)], eps=1e-5)
    assert report.max_rel_error < 1e-4, report
