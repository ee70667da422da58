import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from blendnet import autodiff as ad
from blendnet.autodiff import LayerSpec


def test_linear_forward_examples():
    x = np.array([[1.0, 2.0]])
    assert np.array_equal(ad.linear_forward(x, np.eye(2), np.zeros(2)), x)
    assert np.array_equal(ad.linear_forward(x, [[1.0], [1.0]], [0.0]), [[3.0]])
    b = np.array([1.0, -2.0, 0.5])
    assert np.array_equal(ad.linear_forward(np.zeros((4, 2)), np.ones((2, 3)), b), np.tile(b, (4, 1)))
    with pytest.raises(ad.ShapeMismatch):
        ad.linear_forward(x, np.ones((3, 1)), [0.0])
    with pytest.raises(ad.ShapeMismatch):
        ad.linear_forward(x, np.ones((2, 1)), [0.0, 1.0])


def test_model_forward_simple_layers():
    x = np.array([[-1.0, 2.0]])
    out, _ = ad.model_forward([], {}, x)
    assert np.array_equal(out, x)
    out, _ = ad.model_forward([LayerSpec("relu", 2, 2)], {}, x)
    assert np.array_equal(out, [[0.0, 2.0]])
    out, _ = ad.model_forward([LayerSpec("abs", 2, 2)], {}, [[-3.0, 0.5]])
    assert np.array_equal(out, [[3.0, 0.5]])
    with pytest.raises(ad.ShapeMismatch):
        ad.model_forward([LayerSpec("linear", 3, 1, "l")], {"l.w": np.ones((3, 1)), "l.b": np.zeros((1, 1))}, x)


def test_linear_weight_gradient_is_xT_g():
    rng = np.random.default_rng(0)
    x, w, b = rng.normal(size=(5, 3)), rng.normal(size=(3, 2)), rng.normal(size=(1, 2))
    g = rng.normal(size=(5, 2))
    _, tape = ad.model_forward([LayerSpec("linear", 3, 2, "l")], {"l.w": w, "l.b": b}, x)
    grads = ad.model_backward(tape, g)
    assert np.allclose(grads["l.w"], x.T @ g)
    assert np.allclose(grads["l.b"], g.sum(axis=0, keepdims=True))
    assert np.allclose(grads["input"], g @ w.T)


def test_relu_blocks_negative_inputs_and_abs_kink():
    _, tape = ad.model_forward([LayerSpec("relu", 3, 3)], {}, [[-1.0, 0.0, 2.0]])
    assert np.array_equal(ad.model_backward(tape, [[1.0, 1.0, 1.0]])["input"], [[0.0, 0.0, 1.0]])
    _, tape = ad.model_forward([LayerSpec("abs", 3, 3)], {}, [[-1.0, 0.0, 2.0]])
    assert np.array_equal(ad.model_backward(tape, [[1.0, 1.0, 1.0]])["input"], [[-1.0, 0.0, 1.0]])


def test_backward_shape_guard():
    _, tape = ad.model_forward([LayerSpec("relu", 2, 2)], {}, [[1.0, 2.0]])
    with pytest.raises(ad.TapeMismatch):
        ad.model_backward(tape, [[1.0]])
    with pytest.raises(ad.TapeMismatch):
        ad.model_backward(ad.Tape(), [[1.0]])


def _two_layer():
    rng = np.random.default_rng(3)
    layers = [
        LayerSpec("linear", 4, 6, "l1"),
        LayerSpec("relu", 6, 6),
        LayerSpec("linear", 6, 6, "l2"),
        LayerSpec("add", 6, 6, sources=(2, 3)),
        LayerSpec("abs", 6, 6),
        LayerSpec("concat", 6, 12, sources=(5, 2)),
        LayerSpec("linear", 12, 1, "out"),
    ]
    w = {
        "l1.w": rng.normal(size=(4, 6)),
        "l1.b": rng.normal(size=(1, 6)),
        "l2.w": rng.normal(size=(6, 6)),
        "l2.b": rng.normal(size=(1, 6)),
        "out.w": rng.normal(size=(12, 1)),
        "out.b": rng.normal(size=(1, 1)),
    }
    return layers, w, rng.normal(size=(7, 4)), rng.normal(size=(7, 1))


def test_matches_finite_differences_on_two_layer_net():
    layers, w, x, target = _two_layer()
    out, tape = ad.model_forward(layers, w, x)
    _, g_out = ad.mse_loss(out, target)
    analytic = ad.model_backward(tape, g_out)

    def loss(p):
        o, _ = ad.model_forward(layers, {k: p[k] for k in w}, p["input"])
        return ad.mse_loss(o, target)[0]

    numeric = ad.finite_diff_grad(loss, {**w, "input": x})
    assert ad.max_relative_error(analytic, numeric, floor=1e-4) < 1e-5


def test_finite_difference_quadratic_and_order():
    f = lambda p: float(3.0 * p["a"][0, 0] ** 2 + p["a"][0, 0] ** 3)
    p = {"a": np.array([[0.7]])}
    exact = 6 * 0.7 + 3 * 0.7**2
    assert ad.finite_diff_grad(f, p, h=1e-5)["a"][0, 0] == pytest.approx(exact, abs=1e-8)
    e1 = abs(ad.finite_diff_grad(f, p, h=1e-2)["a"][0, 0] - exact)
    e2 = abs(ad.finite_diff_grad(f, p, h=5e-3)["a"][0, 0] - exact)
    assert e1 / e2 == pytest.approx(4.0, rel=0.02)
    assert p["a"][0, 0] == 0.7


def test_kink_distance():
    _, tape = ad.model_forward([LayerSpec("relu", 3, 3)], {}, [[-1.0, 0.0, 2.0], [1e-7, 3.0, -4.0]])
    assert np.allclose(ad.kink_distance(tape), [1.0, 1e-7])


# ---------------------------------------------------------------- loss and optimiser


def test_mse_examples():
    loss, g = ad.mse_loss([[1.0, 2.0]], [[1.0, 2.0]])
    assert loss == 0 and not g.any()
    loss, g = ad.mse_loss([[0.0]], [[10.0]])
    assert loss == 100.0 and np.array_equal(g, [[-20.0]])
    with pytest.raises(ad.ShapeMismatch):
        ad.mse_loss([[0.0]], [[1.0, 2.0]])


@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8), st.floats(-5, 5))
@settings(max_examples=100)
def test_mse_scaling(values, shift):
    pred = np.array([values])
    target = pred + shift
    l1, _ = ad.mse_loss(pred, target)
    l2, _ = ad.mse_loss(pred, pred + 2 * shift)
    assert l1 >= 0
    assert l2 == pytest.approx(4 * l1, rel=1e-9, abs=1e-12)


def test_adam_first_step_closed_form():
    p = {"w": np.zeros((1, 1))}
    state = ad.AdamState()
    ad.adam_step(p, {"w": np.ones((1, 1))}, state, 1e-3)
    # m_hat = v_hat = 1 after bias correction: w = -lr * 1 / (1 + eps)
    assert p["w"][0, 0] == pytest.approx(-1e-3 / (1 + 1e-8), rel=1e-12)
    assert state.step_count == 1


def test_adam_zero_gradient_and_sign():
    p = {"w": np.array([[0.5, -0.5]])}
    state = ad.AdamState()
    ad.adam_step(p, {"w": np.zeros((1, 2))}, state, 0.1)
    assert np.array_equal(p["w"], [[0.5, -0.5]]) and state.step_count == 1
    g = {"w": np.array([[2.0, -3.0]])}
    before = p["w"].copy()
    for _ in range(20):
        prev = p["w"].copy()
        ad.adam_step(p, g, state, 0.01)
        assert np.all(np.sign(p["w"] - prev) == -np.sign(g["w"]))
    assert np.all(p["w"] != before)
    with pytest.raises(ad.ShapeMismatch):
        ad.adam_step(p, {"w": np.ones((2, 2))}, state, 0.01)


def test_forward_does_not_mutate_inputs():
    layers, w, x, _ = _two_layer()
    snap = {k: v.copy() for k, v in w.items()}
    xs = x.copy()
    o1, _ = ad.model_forward(layers, w, x)
    o2, _ = ad.model_forward(layers, w, x)
    assert np.array_equal(o1, o2) and np.array_equal(x, xs)
    assert all(np.array_equal(w[k], snap[k]) for k in w)
