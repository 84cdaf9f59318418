"""Gradient core: forward values, chain-rule grads vs finite differences,
JVPs, Adam, and checkpoint round-trips."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qnav.autodiff import (
    AdamState,
    Mlp,
    ParamTensor,
    adam_step,
    finite_diff_check,
    load_checkpoint,
    mlp_from_arrays,
    mlp_to_arrays,
    save_checkpoint,
)
from qnav.errors import ConfigError, InputError, StateError


def _manual_mlp(weights, biases, activations):
    ws = [ParamTensor(np.asarray(w, dtype=np.float64)) for w in weights]
    bs = [ParamTensor(np.asarray(b, dtype=np.float64)) for b in biases]
    return Mlp(ws, bs, activations)


def test_identity_layer_passes_input_through():
    net = _manual_mlp([np.eye(2)], [np.zeros(2)], ["identity"])
    out = net.forward(np.array([1.5, -2.0]))
    assert np.allclose(out, [1.5, -2.0])


def test_hand_computed_affine_layer():
    net = _manual_mlp([[[2.0, 0.0], [0.0, 3.0]]], [[1.0, 1.0]], ["identity"])
    out = net.forward(np.array([1.0, 1.0]))
    assert np.allclose(out, [3.0, 4.0])


def test_tanh_of_zero_is_zero():
    net = _manual_mlp([np.zeros((2, 3))], [np.zeros(3)], ["tanh"])
    assert np.allclose(net.forward(np.array([0.7, -0.3])), 0.0)


def test_linear_backward_matches_hand_derivative():
    net = _manual_mlp([[[3.0]]], [[0.0]], ["identity"])
    x = np.array([2.0])
    net.forward(x)
    gin = net.backward(np.array([1.0]))
    assert np.allclose(gin, [3.0])
    assert np.allclose(net.weights[0].grad, [[2.0]])  # dW = x


def test_tanh_input_grad_at_zero_is_one():
    net = _manual_mlp([np.eye(1)], [np.zeros(1)], ["tanh"])
    net.forward(np.array([0.0]))
    assert np.allclose(net.backward(np.array([1.0])), [1.0])


def test_backward_before_forward_raises():
    net = Mlp.create([2, 3, 1], ["tanh", "identity"], np.random.default_rng(0))
    with pytest.raises(StateError):
        net.backward(np.array([1.0]))


@pytest.mark.parametrize("acts", [["tanh", "identity"], ["relu", "tanh"], ["softplus", "identity"]])
def test_random_net_grads_match_finite_differences(acts):
    rng = np.random.default_rng(3)
    net = Mlp.create([4, 8, 2], acts, rng)
    x0 = rng.normal(size=4) * 0.5

    def f(x):
        out = net.forward(x)
        val = float(np.sum(out**2))
        return val, net.backward(2.0 * out)

    err = finite_diff_check(f, x0)
    assert err < 1e-4


def test_parameter_grads_match_finite_differences():
    rng = np.random.default_rng(5)
    net = Mlp.create([3, 6, 1], ["tanh", "identity"], rng)
    x0 = rng.normal(size=3)
    theta0 = net.flat_params()

    def f(theta):
        net.set_flat_params(theta)
        val = float(net.forward(x0)[0])
        net.zero_grads()
        net.backward(np.array([1.0]))
        return val, net.flat_grads()

    err = finite_diff_check(f, theta0)
    net.set_flat_params(theta0)
    assert err < 1e-4


def test_jvp_matches_directional_finite_difference():
    rng = np.random.default_rng(7)
    net = Mlp.create([3, 5, 2], ["tanh", "identity"], rng)
    x = rng.normal(size=3)
    v = rng.normal(size=net.n_params)
    theta = net.flat_params()
    net.forward(x)
    jv = net.jvp(v)
    eps = 1e-6
    net.set_flat_params(theta + eps * v)
    hi = net.forward(x)
    net.set_flat_params(theta - eps * v)
    lo = net.forward(x)
    net.set_flat_params(theta)
    assert np.max(np.abs(jv - (hi - lo) / (2 * eps))) < 1e-5


def test_finite_diff_check_on_sum_of_squares():
    f = lambda x: (float(np.sum(x**2)), 2.0 * x)
    assert finite_diff_check(f, np.array([1.0, 2.0])) < 1e-6


def test_finite_diff_check_constant_function_zero_error():
    f = lambda x: (3.0, np.zeros_like(x))
    assert finite_diff_check(f, np.array([0.3, -0.7])) == 0.0


def test_adam_zero_gradient_leaves_params_unchanged():
    p = ParamTensor(np.array([1.0, -2.0]))
    st_ = AdamState.for_params([p])
    adam_step([p], st_, lr=1e-2)
    assert np.allclose(p.values, [1.0, -2.0])
    assert st_.t == 1


def test_adam_first_step_moves_by_lr_against_gradient():
    p = ParamTensor(np.array([0.0]))
    p.grad[:] = 1.0
    st_ = AdamState.for_params([p])
    adam_step([p], st_, lr=1e-3)
    # bias-corrected first step is -lr * g / (|g| + eps)
    assert abs(p.values[0] + 1e-3) < 1e-9


def test_adam_descends_constant_gradient():
    p = ParamTensor(np.array([0.0]))
    st_ = AdamState.for_params([p])
    for _ in range(50):
        p.grad[:] = 2.5
        adam_step([p], st_, lr=1e-2)
    assert p.values[0] < -0.1


def test_adam_rejects_nonpositive_lr():
    p = ParamTensor(np.array([0.0]))
    with pytest.raises(ConfigError):
        adam_step([p], AdamState.for_params([p]), lr=0.0)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3.0, 3.0), min_size=2, max_size=6))
def test_forward_is_deterministic(xs):
    net = Mlp.create([len(xs), 4, 2], ["tanh", "identity"], np.random.default_rng(11))
    x = np.asarray(xs)
    a = net.forward(x)
    b = net.forward(x)
    assert np.array_equal(a, b)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_forward_finite_on_finite_inputs(seed):
    rng = np.random.default_rng(seed)
    net = Mlp.create([3, 8, 3], ["relu", "tanh"], rng)
    out = net.forward(rng.normal(size=3) * 10.0)
    assert np.all(np.isfinite(out))


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(13)
    net = Mlp.create([3, 5, 2], ["tanh", "identity"], rng)
    path = tmp_path / "net.ckpt"
    save_checkpoint(str(path), mlp_to_arrays(net, "net"), {"kind": "test"})
    arrays, meta = load_checkpoint(str(path))
    net2 = mlp_from_arrays(arrays, "net", ["tanh", "identity"])
    assert meta["kind"] == "test"
    x = rng.normal(size=3)
    assert np.array_equal(net.forward(x), net2.forward(x))


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_text("not a checkpoint")
    with pytest.raises(Exception):
        load_checkpoint(str(path))


def test_mismatched_input_width_raises():
    net = Mlp.create([3, 4, 1], ["tanh", "identity"], np.random.default_rng(0))
    with pytest.raises(InputError):
        net.forward(np.zeros(5))
