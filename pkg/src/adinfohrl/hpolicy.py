"""Deterministic option policies, critic-derived softmax gating and the option-wise DPG step."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ndmath
from .errors import ContractViolation, NumericalError


def softmax(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    e = np.exp(values - values.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class GatingDistribution:
    probs: np.ndarray
    option_values: np.ndarray


class OptionPolicySet:
    """``O`` networks mapping state to a tanh output rescaled onto the action box.

    ``init_spread`` offsets each option's output bias so option ``k`` initially
    acts near ``center + spread * scale * u_k`` with ``u_k`` evenly spaced in
    (-1, 1). With one option the offset is zero.
    """

    def __init__(self, state_dim, action_low, action_high, option_count, hidden_sizes=(64, 64),
                 rng=None, learning_rate=1e-3, init_spread=0.0):
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        if option_count < 1:
            raise ContractViolation("option_count must be >= 1")
        self.low = np.asarray(action_low, dtype=np.float64)
        self.high = np.asarray(action_high, dtype=np.float64)
        self.scale = (self.high - self.low) / 2.0
        self.center = (self.high + self.low) / 2.0
        self.state_dim = int(state_dim)
        self.action_dim = len(self.low)
        self.option_count = int(option_count)
        sizes = [state_dim, *hidden_sizes, self.action_dim]
        acts = ["relu"] * len(hidden_sizes) + ["tanh"]
        self.policies = []
        for k in range(self.option_count):
            net = ndmath.net_init(sizes, acts, rng)
            u = -1.0 + (2 * k + 1) / self.option_count
            net.biases[-1][:] = np.arctanh(np.clip(init_spread * u, -0.999, 0.999))
            self.policies.append(net)
        self.target_policies = [p.copy() for p in self.policies]
        self.adams = [ndmath.adam_init(p, learning_rate) for p in self.policies]

    def _check_option(self, o):
        if not 0 <= int(o) < self.option_count:
            raise ContractViolation(f"option {o} outside [0, {self.option_count})")

    def actions(self, o, states, target=False) -> np.ndarray:
        """Actions of option ``o`` for a batch of states."""
        self._check_option(o)
        net = (self.target_policies if target else self.policies)[o]
        out = self.center + self.scale * ndmath.trace(net, states)[-1]
        # rounding in center + scale * tanh can step past the box edge
        return np.clip(out, self.low, self.high)

    def all_actions(self, states, target=False) -> np.ndarray:
        """Array of shape ``(O, N, action_dim)``."""
        return np.stack([self.actions(o, states, target) for o in range(self.option_count)])

    def option_values_batch(self, critic, states, target=False) -> np.ndarray:
        """``Q_min(s, mu^o(s))`` for every state and option, shape ``(N, O)``."""
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        n = len(states)
        acts = self.all_actions(states, target).reshape(self.option_count * n, self.action_dim)
        tiled = np.tile(states, (self.option_count, 1))
        q = critic.q_values(tiled, acts, "min_target" if target else "min")
        return q.reshape(self.option_count, n).T

    def target_actions(self, critic, states) -> np.ndarray:
        """Greedy option under the target critic, acted by the target policies."""
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        if self.option_count == 1:
            return self.actions(0, states, target=True)
        acts = self.all_actions(states, target=True)
        n = len(states)
        tiled = np.tile(states, (self.option_count, 1))
        q = critic.q_values(tiled, acts.reshape(-1, self.action_dim), "min_target")
        best = q.reshape(self.option_count, n).argmax(axis=0)
        return acts[best, np.arange(n)]

    def soft_update_targets(self, tau):
        for tgt, net in zip(self.target_policies, self.policies):
            ndmath.soft_update(tgt, net, tau)


def option_action(policy_set: OptionPolicySet, o, state) -> np.ndarray:
    state = np.asarray(state, dtype=np.float64)
    if state.shape != (policy_set.state_dim,):
        raise ContractViolation(f"state must have {policy_set.state_dim} entries")
    return policy_set.actions(o, state[None, :])[0]


def gating(policy_set: OptionPolicySet, critic, state) -> GatingDistribution:
    """Softmax over per-option values ``Q_min(s, mu^o(s))``."""
    values = policy_set.option_values_batch(critic, np.reshape(state, (1, -1)))[0]
    return GatingDistribution(softmax(values), values)


def sample_option(dist: GatingDistribution, rng: np.random.Generator) -> int:
    # inverse-cdf draw; one uniform per call keeps rng consumption fixed
    u = rng.random()
    cdf = np.cumsum(dist.probs)
    return int(min(np.searchsorted(cdf, u * cdf[-1], side="right"), len(cdf) - 1))


def greedy_option(policy_set: OptionPolicySet, critic, state) -> int:
    """Argmax of the option values, lowest index on ties."""
    values = policy_set.option_values_batch(critic, np.reshape(state, (1, -1)))[0]
    return int(np.argmax(values))


def state_values(policy_set: OptionPolicySet, critic, states) -> np.ndarray:
    values = policy_set.option_values_batch(critic, states)
    return (softmax(values) * values).sum(axis=1)


def state_value(policy_set: OptionPolicySet, critic, state) -> float:
    return float(state_values(policy_set, critic, np.reshape(state, (1, -1)))[0])


def assign_options(option_net, batch) -> np.ndarray:
    """Hard assignment ``argmax_o p(o | s, a)``; ties go to the lowest index."""
    post = option_net.posteriors(batch.states, batch.actions)
    return post.argmax(axis=1)


def dpg_gradient(policy_set: OptionPolicySet, critic, o, states) -> ndmath.GradientBundle:
    """Gradient of ``mean_s Q1(s, mu^o(s))`` with respect to option ``o``'s parameters."""
    net = policy_set.policies[o]
    p_acts = ndmath.trace(net, states)
    actions = policy_set.center + policy_set.scale * p_acts[-1]
    dq_da = critic.action_gradient(states, actions) / len(states)
    return ndmath.backward_from_trace(net, p_acts, dq_da * policy_set.scale)


def dpg_update(policy_set: OptionPolicySet, critic, states, assignments) -> OptionPolicySet:
    """One Adam ascent step per option on the states assigned to it.

    Options with no assigned state are left untouched.
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    assignments = np.asarray(assignments)
    for o in range(policy_set.option_count):
        mask = assignments == o
        if not mask.any():
            continue
        grads = dpg_gradient(policy_set, critic, o, states[mask])
        try:
            ndmath.adam_step(policy_set.adams[o], policy_set.policies[o], grads, ascend=True)
        except NumericalError as exc:
            raise NumericalError(f"option {o}: {exc}") from exc
    return policy_set
