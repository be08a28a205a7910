import numpy as np
import pytest

from adinfohrl import ndmath
from adinfohrl.buffers import TransitionBatch
from adinfohrl.critic import TwinCritic
from adinfohrl.hpolicy import (GatingDistribution, OptionPolicySet, assign_options, dpg_gradient,
                               dpg_update, gating, greedy_option, option_action, sample_option,
                               softmax, state_value, state_values)
from adinfohrl.errors import ContractViolation
from _oracles import assert_close_grads, central_diff


class ActionIsValue:
    """Critic stand-in with Q(s, a) = a[0]."""

    def q_values(self, states, actions, which="min"):
        return np.asarray(actions)[:, 0].copy()


class Quadratic:
    """Q(s, a) = -(a - 0.7)^2 with its analytic action gradient."""

    def q_values(self, states, actions, which="min"):
        return -((np.asarray(actions)[:, 0] - 0.7) ** 2)

    def action_gradient(self, states, actions):
        return -2.0 * (np.asarray(actions) - 0.7)


class FixedPosterior:
    def __init__(self, post):
        self.post = np.asarray(post, dtype=float)

    def posteriors(self, states, actions):
        return self.post


def fixed_actions(values):
    """One-dim policies that output ``values[o]`` regardless of state."""
    ps = OptionPolicySet(1, [-10.0], [10.0], len(values), (4,), rng=0)
    for net, v in zip(ps.policies, values):
        for p in net.parameters():
            p[...] = 0.0
        net.biases[-1][:] = np.arctanh(v / 10.0)
    ps.target_policies = [p.copy() for p in ps.policies]
    return ps


def test_zero_weight_policy_acts_at_center():
    ps = OptionPolicySet(3, [-1.0, -2.0], [1.0, 2.0], 2, (5,), rng=0)
    for p in ps.policies[1].parameters():
        p[...] = 0.0
    assert np.array_equal(option_action(ps, 1, [0.3, 0.1, -0.2]), [0.0, 0.0])


def test_actions_stay_in_bounds():
    ps = OptionPolicySet(2, [-0.1, -0.3], [0.1, 0.5], 2, (16,), rng=1)
    for p in ps.policies[0].parameters():
        p *= 50.0
    states = np.random.default_rng(0).normal(scale=10, size=(10_000, 2))
    for o in range(2):
        a = ps.actions(o, states)
        assert (a >= ps.low).all() and (a <= ps.high).all()


def test_option_action_deterministic_and_checked():
    ps = OptionPolicySet(2, [-1.0], [1.0], 2, (8,), rng=3)
    s = np.array([0.4, -0.9])
    assert np.array_equal(option_action(ps, 0, s), option_action(ps, 0, s))
    with pytest.raises(ContractViolation):
        option_action(ps, 2, s)


def test_init_spread_separates_options():
    ps = OptionPolicySet(1, [-1.0], [1.0], 2, (8,), rng=0, init_spread=0.5)
    acts = ps.all_actions(np.zeros((1, 1)))[:, 0, 0]
    assert acts.tolist() == pytest.approx([-0.25, 0.25], abs=1e-12)
    single = OptionPolicySet(1, [-1.0], [1.0], 1, (8,), rng=0, init_spread=0.5)
    assert not single.policies[0].biases[-1].any()


def test_gating_equal_values_uniform():
    g = gating(fixed_actions([1.0, 1.0, 1.0]), ActionIsValue(), [0.0])
    assert np.allclose(g.probs, 1 / 3, atol=1e-15)


def test_gating_two_way_softmax():
    g = gating(fixed_actions([1.0, 2.0]), ActionIsValue(), [0.0])
    assert g.option_values == pytest.approx([1.0, 2.0], abs=1e-12)
    assert g.probs == pytest.approx([0.2689414, 0.7310586], abs=1e-7)


def test_softmax_shift_invariance():
    v = np.array([0.3, -1.2, 2.5])
    assert np.abs(softmax(v + 100.0) - softmax(v)).max() <= 1e-12


def test_sample_option_degenerate():
    rng = np.random.default_rng(0)
    d = GatingDistribution(np.array([1.0, 0.0]), np.zeros(2))
    assert all(sample_option(d, rng) == 0 for _ in range(1000))


def test_sample_option_frequencies():
    rng = np.random.default_rng(0)
    d = GatingDistribution(np.array([0.5, 0.5]), np.zeros(2))
    draws = np.array([sample_option(d, rng) for _ in range(100_000)])
    assert abs(draws.mean() - 0.5) < 0.01


def test_sample_option_reproducible():
    d = GatingDistribution(np.array([0.2, 0.3, 0.5]), np.zeros(3))
    a = [sample_option(d, np.random.default_rng(4)) for _ in range(5)]
    r1, r2 = np.random.default_rng(7), np.random.default_rng(7)
    assert [sample_option(d, r1) for _ in range(50)] == [sample_option(d, r2) for _ in range(50)]
    assert len(set(a)) == 1


def test_greedy_option_argmax_and_ties():
    assert greedy_option(fixed_actions([2.0, 5.0, 3.0]), ActionIsValue(), [0.0]) == 1
    assert greedy_option(fixed_actions([4.0, 4.0]), ActionIsValue(), [0.0]) == 0


def test_greedy_agrees_with_gating_argmax():
    critic = TwinCritic(2, 1, (16,), rng=0)
    ps = OptionPolicySet(2, [-1.0], [1.0], 3, (16,), rng=1, init_spread=0.6)
    states = np.random.default_rng(2).normal(size=(1000, 2))
    for s in states:
        g = gating(ps, critic, s)
        assert abs(g.probs.sum() - 1.0) <= 1e-9
        assert int(np.argmax(g.probs)) == greedy_option(ps, critic, s)


def test_state_value_single_option():
    critic = TwinCritic(2, 1, (8,), rng=0)
    ps = OptionPolicySet(2, [-1.0], [1.0], 1, (8,), rng=1)
    s = np.array([0.3, 0.4])
    a = option_action(ps, 0, s)
    assert state_value(ps, critic, s) == pytest.approx(
        float(critic.q_values(s[None], a[None], "min")[0]), abs=1e-15)


def test_state_value_mixture():
    v = state_value(fixed_actions([1.0, 3.0]), ActionIsValue(), [0.0])
    p = np.exp([1.0, 3.0]) / np.exp([1.0, 3.0]).sum()
    assert v == pytest.approx(p[0] * 1 + p[1] * 3, abs=1e-12)
    assert v == pytest.approx(2.7616, abs=1e-4)


def test_state_value_within_option_value_range():
    critic = TwinCritic(2, 1, (16,), rng=3)
    ps = OptionPolicySet(2, [-1.0], [1.0], 4, (16,), rng=4, init_spread=0.8)
    states = np.random.default_rng(0).normal(size=(300, 2))
    vals = ps.option_values_batch(critic, states)
    v = state_values(ps, critic, states)
    assert (v >= vals.min(axis=1) - 1e-12).all() and (v <= vals.max(axis=1) + 1e-12).all()


def test_assign_options_argmax_and_ties():
    batch = TransitionBatch(np.zeros((3, 1)), np.zeros((3, 1)), np.zeros(3), np.zeros((3, 1)),
                            np.zeros(3, bool), np.zeros(3), np.zeros(3, int))
    post = [[0.9, 0.1], [0.5, 0.5], [0.2, 0.8]]
    assert assign_options(FixedPosterior(post), batch).tolist() == [0, 0, 1]


def test_flat_critic_leaves_policy_unchanged():
    critic = TwinCritic(2, 1, (8,), rng=0)
    for p in critic.q1.parameters():
        p[...] = 0.0
    ps = OptionPolicySet(2, [-1.0], [1.0], 2, (8,), rng=1)
    before = [p.copy() for net in ps.policies for p in net.parameters()]
    dpg_update(ps, critic, np.random.default_rng(0).normal(size=(10, 2)), np.array([0, 1] * 5))
    after = [p for net in ps.policies for p in net.parameters()]
    assert all(np.array_equal(a, b) for a, b in zip(after, before))


def test_dpg_converges_to_quadratic_optimum():
    ps = OptionPolicySet(1, [-1.0], [1.0], 1, (), rng=0)
    states = np.random.default_rng(1).uniform(-1, 1, size=(64, 1))
    for step in range(5000):
        dpg_update(ps, Quadratic(), states, np.zeros(64, dtype=int))
        if np.abs(ps.actions(0, states) - 0.7).max() < 1e-2:
            break
    assert np.abs(ps.actions(0, states) - 0.7).max() < 1e-2


def test_dpg_gradient_matches_finite_differences():
    critic = TwinCritic(2, 1, (6,), rng=0)
    ps = OptionPolicySet(2, [-0.5], [1.5], 2, (5,), rng=1, init_spread=0.3)
    states = np.random.default_rng(2).normal(size=(7, 2))
    grads = dpg_gradient(ps, critic, 1, states)

    def objective():
        return float(critic.q_values(states, ps.actions(1, states), "q1").mean())

    numeric = central_diff(objective, ps.policies[1].parameters())
    assert_close_grads(grads.parameters(), numeric)


def test_dpg_update_touches_only_assigned_options():
    critic = TwinCritic(2, 1, (8,), rng=0)
    ps = OptionPolicySet(2, [-1.0], [1.0], 3, (8,), rng=1)
    before = [[p.copy() for p in net.parameters()] for net in ps.policies]
    dpg_update(ps, critic, np.random.default_rng(0).normal(size=(6, 2)), np.array([1] * 6))
    changed = [any(not np.array_equal(a, b) for a, b in zip(net.parameters(), old))
               for net, old in zip(ps.policies, before)]
    assert changed == [False, True, False]
    for tgt, old in zip(ps.target_policies, before):
        assert all(np.array_equal(a, b) for a, b in zip(tgt.parameters(), old))
