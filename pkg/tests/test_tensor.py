import numpy as np
import pytest

from cuprl.errors import DimensionError, NumericError
from cuprl.tensor import (
    AdamState,
    ParamVector,
    adam_step,
    finite_difference_gradient,
    grad_check,
    mlp_backward,
    mlp_forward,
    mlp_init,
)


def naive_mlp(params, x, activations):
    """Independent loop-based oracle for the forward pass."""
    h = np.array(x, dtype=float)
    for k, act in enumerate(activations):
        w, b = params.layer(k)
        z = np.zeros(w.shape[0])
        for i in range(w.shape[0]):
            acc = b[i]
            for j in range(w.shape[1]):
                acc += w[i, j] * h[j]
            z[i] = acc
        if act == "relu":
            h = np.maximum(z, 0.0)
        elif act == "tanh":
            h = np.tanh(z)
        else:
            h = z
    return h


def test_param_vector_length_invariant():
    with pytest.raises(DimensionError):
        ParamVector(np.zeros(5), shapes=((2, 2),))  # needs 2*2+2 = 6
    pv = ParamVector(np.zeros(6), shapes=((2, 2),))
    assert pv.values.size == 6


def test_forward_zero_params_gives_zero_output():
    pv = ParamVector(np.zeros(3 * 4 + 3), shapes=((3, 4),))
    out = mlp_forward(pv, np.array([1.0, -2.0, 3.0, 0.5]), ("relu",))
    assert np.all(out == 0.0)


def test_forward_identity_single_layer():
    pv = ParamVector(np.array([1.0, 0.0]), shapes=((1, 1),))
    out = mlp_forward(pv, np.array([2.0]), ("identity",))
    assert out[0] == 2.0


def test_forward_matches_naive_matmul_oracle():
    rng = np.random.default_rng(7)
    pv = mlp_init((4, 5, 3), rng)
    acts = ("tanh", "identity")
    x = rng.standard_normal(4)
    fast = mlp_forward(pv, x, acts)
    slow = naive_mlp(pv, x, acts)
    assert np.max(np.abs(fast - slow)) <= 1e-12


def test_forward_is_pure():
    rng = np.random.default_rng(3)
    pv = mlp_init((3, 8, 2), rng)
    x = rng.standard_normal(3)
    a = mlp_forward(pv, x, ("relu", "identity"))
    b = mlp_forward(pv, x, ("relu", "identity"))
    assert np.array_equal(a, b)


def test_forward_dimension_error_names_layer():
    pv = mlp_init((3, 2), np.random.default_rng(0))
    with pytest.raises(DimensionError, match="layer 0"):
        mlp_forward(pv, np.zeros(4), ("identity",))


def test_batched_forward_matches_rowwise():
    rng = np.random.default_rng(11)
    pv = mlp_init((4, 6, 2), rng)
    acts = ("relu", "identity")
    xs = rng.standard_normal((5, 4))
    batched = mlp_forward(pv, xs, acts)
    rows = np.stack([mlp_forward(pv, x, acts) for x in xs])
    assert np.allclose(batched, rows, atol=0)


def test_backward_zero_upstream_gives_zero_grads():
    rng = np.random.default_rng(5)
    pv = mlp_init((3, 4, 2), rng)
    g, gin = mlp_backward(pv, rng.standard_normal(3), np.zeros(2), ("relu", "identity"))
    assert np.all(g.values == 0.0)
    assert np.all(gin == 0.0)


def test_backward_linear_layer_analytic():
    rng = np.random.default_rng(9)
    pv = mlp_init((3, 2), rng)
    x = rng.standard_normal(3)
    g_up = rng.standard_normal(2)
    grad, gin = mlp_backward(pv, x, g_up, ("identity",))
    gw, gb = grad.layer(0)
    assert np.allclose(gw, np.outer(g_up, x), atol=1e-15)
    assert np.allclose(gb, g_up, atol=1e-15)
    w, _ = pv.layer(0)
    assert np.allclose(gin, g_up @ w, atol=1e-15)


def test_backward_matches_finite_differences():
    rng = np.random.default_rng(13)
    pv = mlp_init((4, 8, 8, 3), rng)
    acts = ("relu", "tanh", "identity")
    x = rng.standard_normal(4)
    weights = rng.standard_normal(3)

    def loss(p):
        return float(weights @ mlp_forward(p, x, acts))

    analytic, _ = mlp_backward(pv, x, weights, acts)
    assert grad_check(loss, pv, analytic, step=1e-6) <= 1e-5


def test_backward_batched_sums_over_rows():
    rng = np.random.default_rng(17)
    pv = mlp_init((3, 5, 2), rng)
    acts = ("relu", "identity")
    xs = rng.standard_normal((4, 3))
    ups = rng.standard_normal((4, 2))
    g_batch, gin_batch = mlp_backward(pv, xs, ups, acts)
    g_sum = pv.zeros_like()
    for x, u in zip(xs, ups):
        g, gin = mlp_backward(pv, x, u, acts)
        g_sum.values += g.values
    assert np.allclose(g_batch.values, g_sum.values, atol=1e-12)
    assert gin_batch.shape == xs.shape


def test_adam_zero_grads_fixed_point():
    rng = np.random.default_rng(1)
    pv = mlp_init((2, 2), rng)
    before = pv.values.copy()
    state = AdamState.fresh(pv.values.size, lr=1e-3)
    zeros = pv.zeros_like()
    for t in range(1, 8):
        adam_step(state, pv, zeros)
        assert state.t == t
        assert np.array_equal(pv.values, before)


def test_adam_single_step_hand_formula():
    pv = ParamVector(np.array([0.0]), shapes=((1, 0),))
    state = AdamState.fresh(1, lr=3e-4)
    adam_step(state, pv, ParamVector(np.array([1.0]), shapes=((1, 0),)))
    # fresh state, unit gradient: bias correction makes the step = lr/(1+eps)
    expected = -3e-4 / (1.0 + 1e-8)
    assert abs(pv.values[0] - expected) < 1e-18
    assert pv.values[0] < 0.0


def test_adam_converges_on_quadratic():
    # minimum of x^2 is x* = 0; at lr 3e-4 the iterate covers at most lr per
    # step, so 5000 steps are needed to get well inside |x| < 0.5 from x = 1
    pv = ParamVector(np.array([1.0]), shapes=((1, 0),))
    state = AdamState.fresh(1, lr=3e-4)
    for _ in range(5000):
        g = ParamVector(np.array([2.0 * pv.values[0]]), shapes=((1, 0),))
        adam_step(state, pv, g)
    assert abs(pv.values[0]) < 0.5


def test_adam_rejects_non_finite_grads():
    pv = ParamVector(np.array([0.0]), shapes=((1, 0),))
    state = AdamState.fresh(1, lr=1e-3)
    with pytest.raises(NumericError):
        adam_step(state, pv, ParamVector(np.array([np.nan]), shapes=((1, 0),)))


def test_grad_check_exact_for_quadratic():
    rng = np.random.default_rng(21)
    pv = ParamVector(rng.standard_normal(6), shapes=((2, 2),))
    target = rng.standard_normal(6)

    def loss(p):
        return float(np.sum((p.values - target) ** 2))

    analytic = ParamVector(2.0 * (pv.values - target), pv.shapes)
    assert grad_check(loss, pv, analytic, step=1e-5) <= 1e-9


def test_grad_check_scaled_gradient_reports_one_third():
    rng = np.random.default_rng(23)
    pv = ParamVector(rng.standard_normal(6) + 2.0, shapes=((2, 2),))

    def loss(p):
        return float(np.sum(p.values**2))

    wrong = ParamVector(4.0 * pv.values, pv.shapes)  # 2x the true gradient
    err = grad_check(loss, pv, wrong, step=1e-5)
    assert abs(err - 1.0 / 3.0) < 1e-3


def test_finite_difference_gradient_shape():
    rng = np.random.default_rng(29)
    pv = mlp_init((2, 3), rng)

    def loss(p):
        return float(np.sum(mlp_forward(p, np.ones(2), ("identity",)) ** 2))

    g = finite_difference_gradient(loss, pv, step=1e-6)
    assert g.values.shape == pv.values.shape
