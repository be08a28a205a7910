import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from adinfohrl import ndmath
from adinfohrl.errors import ConfigurationError, ContractViolation, NumericalError
from _oracles import assert_close_grads, central_diff, matmul_forward


def test_init_is_deterministic():
    a = ndmath.net_init([2, 3, 1], ["relu", "tanh"], 7)
    b = ndmath.net_init([2, 3, 1], ["relu", "tanh"], 7)
    for pa, pb in zip(a.parameters(), b.parameters()):
        assert np.array_equal(pa, pb)


def test_init_bounds_and_zero_bias():
    net = ndmath.net_init([400, 10], ["identity"], 0)
    assert ndmath.init_bound(400) == pytest.approx(0.05)
    assert np.abs(net.weights[0]).max() <= 0.05
    assert not net.biases[0].any()


def test_init_rejects_mismatched_lengths():
    with pytest.raises(ConfigurationError):
        ndmath.net_init([2, 3, 1], ["relu"], 0)
    with pytest.raises(ConfigurationError):
        ndmath.net_init([2], [], 0)


def test_zero_parameters_give_tanh_of_zero():
    net = ndmath.net_init([3, 4, 2], ["relu", "tanh"], 1)
    for p in net.parameters():
        p[...] = 0.0
    assert np.array_equal(ndmath.forward(net, [0.3, -1.0, 2.0]), np.zeros(2))


def test_identity_network():
    net = ndmath.net_init([2, 2], ["identity"], 0)
    net.weights[0] = np.eye(2)
    out = ndmath.forward(net, [1.5, -2.0])
    assert np.array_equal(out, [1.5, -2.0])


def test_relu_dead_region():
    net = ndmath.net_init([2, 3, 1], ["relu", "identity"], 0)
    net.weights[0] = np.abs(net.weights[0])
    acts = ndmath.trace(net, np.array([[-1.0, -2.0]]))
    assert not acts[1].any()


def test_forward_matches_loop_oracle():
    net = ndmath.net_init([2, 4, 1], ["tanh", "identity"], 3)
    net.biases[0][:] = [0.1, -0.2, 0.3, 0.05]
    x = np.array([0.3, -0.7])
    expected = matmul_forward(net.weights, net.biases, net.activations, x)
    assert np.abs(ndmath.forward(net, x) - expected).max() < 1e-12


def test_forward_batch_agrees_with_rows():
    net = ndmath.net_init([3, 5, 2], ["relu", "softmax"], 4)
    x = np.random.default_rng(0).normal(size=(6, 3))
    batch = ndmath.forward(net, x)
    for row, out in zip(x, batch):
        assert np.allclose(ndmath.forward(net, row), out, atol=1e-15)


def test_forward_rejects_bad_input():
    net = ndmath.net_init([2, 1], ["identity"], 0)
    with pytest.raises(ContractViolation):
        ndmath.forward(net, [1.0, 2.0, 3.0])
    with pytest.raises(ContractViolation):
        ndmath.forward(net, [1.0, np.nan])


def test_softmax_output_is_distribution():
    net = ndmath.net_init([3, 8, 4], ["relu", "softmax"], 5)
    x = np.random.default_rng(1).normal(scale=30.0, size=(50, 3))
    out = ndmath.forward(net, x)
    assert (out >= 0).all() and (out <= 1).all()
    assert np.abs(out.sum(axis=1) - 1).max() < 1e-9


def test_zero_cotangent_gives_zero_gradients():
    net = ndmath.net_init([3, 5, 2], ["relu", "tanh"], 0)
    g = ndmath.backward(net, [0.1, 0.2, 0.3], np.zeros(2))
    assert all(not p.any() for p in g.parameters())
    assert not g.input_grad.any()


def test_linear_layer_gradient_is_outer_product():
    net = ndmath.net_init([3, 2], ["identity"], 9)
    x = np.array([0.5, -1.0, 2.0])
    g = np.array([0.3, -0.7])
    grads = ndmath.backward(net, x, g)
    assert np.allclose(grads.weight_grads[0], np.outer(g, x), atol=1e-15)
    assert np.allclose(grads.bias_grads[0], g)
    assert np.allclose(grads.input_grad, net.weights[0].T @ g)


@pytest.mark.parametrize("acts", [["relu", "tanh"], ["tanh", "identity"], ["relu", "softmax"]])
def test_backward_matches_finite_differences(acts):
    rng = np.random.default_rng(11)
    net = ndmath.net_init([3, 5, 2], acts, 2)
    for b in net.biases:
        b[:] = rng.normal(scale=0.1, size=b.shape)
    x = rng.normal(size=3)
    g = rng.normal(size=2)
    grads = ndmath.backward(net, x, g)

    def value():
        return float(g @ ndmath.forward(net, x))

    numeric = central_diff(value, net.parameters() + [x])
    assert_close_grads(grads.parameters() + [grads.input_grad], numeric)


def test_adam_zero_gradient_is_fixed_point():
    net = ndmath.net_init([2, 1], ["identity"], 0)
    before = [p.copy() for p in net.parameters()]
    state = ndmath.adam_init(net)
    zero = ndmath.GradientBundle([np.zeros((1, 2))], [np.zeros(1)], np.zeros(2))
    ndmath.adam_step(state, net, zero)
    assert state.step_count == 1
    for p, q in zip(net.parameters(), before):
        assert np.array_equal(p, q)


@pytest.mark.parametrize("ascend,direction", [(False, -1.0), (True, 1.0)])
def test_adam_first_step_size(ascend, direction):
    net = ndmath.net_init([1, 1], ["identity"], 0)
    net.weights[0][:] = 0.0
    state = ndmath.adam_init(net, learning_rate=0.001)
    grads = ndmath.GradientBundle([np.array([[0.3]])], [np.zeros(1)], np.zeros(1))
    ndmath.adam_step(state, net, grads, ascend=ascend)
    # m_hat = 0.3, v_hat = 0.09 -> step = lr * 0.3 / (0.3 + eps)
    expected = direction * 0.001 * 0.3 / (0.3 + 1e-8)
    assert net.weights[0][0, 0] == pytest.approx(expected, rel=1e-12)


def test_adam_rejects_non_finite_gradient():
    net = ndmath.net_init([2, 3, 1], ["relu", "identity"], 0)
    state = ndmath.adam_init(net)
    grads = ndmath.backward(net, [1.0, 1.0], [1.0])
    grads.weight_grads[1][0, 0] = np.inf
    with pytest.raises(NumericalError, match="layer 1"):
        ndmath.adam_step(state, net, grads)


def test_soft_update_full_replacement():
    t = ndmath.net_init([2, 3, 1], ["relu", "identity"], 0)
    o = ndmath.net_init([2, 3, 1], ["relu", "identity"], 1)
    ndmath.soft_update(t, o, 1.0)
    for a, b in zip(t.parameters(), o.parameters()):
        assert np.array_equal(a, b)


def test_soft_update_paper_tau():
    t = ndmath.net_init([1, 1], ["identity"], 0)
    o = t.copy()
    t.weights[0][:] = 0.0
    o.weights[0][:] = 1.0
    ndmath.soft_update(t, o, 0.005)
    assert t.weights[0][0, 0] == pytest.approx(0.005, abs=1e-15)


def test_soft_update_geometric_decay():
    t = ndmath.net_init([1, 1], ["identity"], 0)
    o = t.copy()
    t.weights[0][:] = 0.0
    o.weights[0][:] = 1.0
    for _ in range(200):
        ndmath.soft_update(t, o, 0.005)
    gap = 1.0 - t.weights[0][0, 0]
    assert gap == pytest.approx(0.995 ** 200, rel=1e-10)
    assert gap == pytest.approx(0.367, abs=1e-3)


def test_soft_update_architecture_mismatch():
    with pytest.raises(ContractViolation):
        ndmath.soft_update(ndmath.net_init([2, 1], ["identity"], 0),
                           ndmath.net_init([3, 1], ["identity"], 0), 0.5)


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.001, 1.0))
def test_soft_update_linearity(seed, tau):
    t = ndmath.net_init([3, 4, 2], ["relu", "tanh"], seed)
    o = ndmath.net_init([3, 4, 2], ["relu", "tanh"], seed + 1)
    before = [p.copy() for p in t.parameters()]
    ndmath.soft_update(t, o, tau)
    for new, old, on in zip(t.parameters(), before, o.parameters()):
        assert np.abs((new - old) - tau * (on - old)).max() <= 1e-12


def test_export_round_trip_is_bit_exact():
    net = ndmath.net_init([3, 7, 2], ["relu", "softmax"], 12)
    net.biases[0][:] = np.random.default_rng(0).normal(size=7) * math.pi
    text = ndmath.export_net(net)
    back = ndmath.import_net(text)
    assert back.same_architecture(net)
    for a, b in zip(net.parameters(), back.parameters()):
        assert np.array_equal(a, b)
    assert ndmath.export_net(back) == text


def test_import_rejects_other_versions():
    text = ndmath.export_net(ndmath.net_init([1, 1], ["identity"], 0))
    with pytest.raises(ContractViolation):
        ndmath.import_net(text.replace('"version": 1', '"version": 99'))
