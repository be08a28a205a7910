"""Twin Q-networks trained with clipped double-Q targets and target-policy smoothing."""
from __future__ import annotations

import numpy as np

from . import ndmath
from .errors import ContractViolation, NumericalError


class TwinCritic:
    """Two Q(s, a) networks on ``state ++ action`` with slowly tracking target copies."""

    def __init__(self, state_dim, action_dim, hidden_sizes=(64, 64), rng=None, learning_rate=1e-3):
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        sizes = [state_dim + action_dim, *hidden_sizes, 1]
        # critic output activation is identity; hidden layers relu
        acts = ["relu"] * len(hidden_sizes) + ["identity"]
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.q1 = ndmath.net_init(sizes, acts, rng)
        self.q2 = ndmath.net_init(sizes, acts, rng)
        self.q1_target = self.q1.copy()
        self.q2_target = self.q2.copy()
        self.q1_adam = ndmath.adam_init(self.q1, learning_rate)
        self.q2_adam = ndmath.adam_init(self.q2, learning_rate)

    def nets(self) -> dict:
        return {"q1": self.q1, "q2": self.q2, "q1_target": self.q1_target, "q2_target": self.q2_target}

    def _inputs(self, states, actions):
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
        if states.shape[1] != self.state_dim or actions.shape[1] != self.action_dim:
            raise ContractViolation(
                f"expected state dim {self.state_dim} and action dim {self.action_dim}, "
                f"got {states.shape} and {actions.shape}")
        if len(states) != len(actions):
            raise ContractViolation("states and actions have different batch sizes")
        return np.concatenate([states, actions], axis=1)

    def q_values(self, states, actions, which="min") -> np.ndarray:
        """Q estimates for a batch; ``which`` is q1, q2, min or min_target."""
        x = self._inputs(states, actions)
        if which == "q1":
            return ndmath.trace(self.q1, x)[-1][:, 0]
        if which == "q2":
            return ndmath.trace(self.q2, x)[-1][:, 0]
        if which == "min":
            return np.minimum(ndmath.trace(self.q1, x)[-1][:, 0], ndmath.trace(self.q2, x)[-1][:, 0])
        if which == "min_target":
            return np.minimum(ndmath.trace(self.q1_target, x)[-1][:, 0],
                              ndmath.trace(self.q2_target, x)[-1][:, 0])
        raise ContractViolation(f"unknown critic head {which!r}")

    def action_gradient(self, states, actions) -> np.ndarray:
        """Per-sample ``dQ1/da``, shape ``(N, action_dim)``."""
        x = self._inputs(states, actions)
        acts = ndmath.trace(self.q1, x)
        grads = ndmath.backward_from_trace(self.q1, acts, np.ones((len(x), 1)))
        return grads.input_grad[:, self.state_dim:]

    def soft_update_targets(self, tau):
        ndmath.soft_update(self.q1_target, self.q1, tau)
        ndmath.soft_update(self.q2_target, self.q2, tau)


def q_value(critic: TwinCritic, state, action, which="min") -> float:
    return float(critic.q_values(np.reshape(state, (1, -1)), np.reshape(action, (1, -1)), which)[0])


def smoothed_target_actions(target_policy, critic, next_states, smoothing_sigma, noise_clip, rng):
    """Target-policy action plus clipped Gaussian noise, clipped to the action box.

    Noise scale and clip are in units of the action half-range.
    """
    actions = target_policy.target_actions(critic, next_states)
    if smoothing_sigma > 0:
        scale = target_policy.scale
        noise = rng.normal(0.0, smoothing_sigma, size=actions.shape)
        noise = np.clip(noise, -noise_clip, noise_clip) * scale
        actions = np.clip(actions + noise, target_policy.low, target_policy.high)
    return actions


def compute_td_target(critic: TwinCritic, batch, target_policy, gamma, smoothing_sigma,
                      noise_clip, rng) -> np.ndarray:
    """``y = r + gamma * (1 - terminal) * min_target(s', a')`` for every transition."""
    if not 0.0 <= gamma < 1.0:
        raise ContractViolation(f"gamma must be in [0, 1), got {gamma}")
    if len(batch) == 0:
        raise ContractViolation("empty batch")
    a_next = smoothed_target_actions(target_policy, critic, batch.next_states,
                                     smoothing_sigma, noise_clip, rng)
    q_next = critic.q_values(batch.next_states, a_next, "min_target")
    return batch.rewards + gamma * (1.0 - batch.terminals) * q_next


def _mse_step(net, adam, x, targets):
    acts = ndmath.trace(net, x)
    resid = acts[-1][:, 0] - targets
    loss = float(np.mean(resid * resid))
    if not np.isfinite(loss):
        raise NumericalError(
            f"critic loss is {loss}; max |target| {np.abs(targets).max():.3e}, "
            f"max |prediction| {np.abs(acts[-1]).max():.3e}")
    grads = ndmath.backward_from_trace(net, acts, (2.0 / len(targets)) * resid[:, None])
    ndmath.adam_step(adam, net, grads)
    return loss


def critic_update(critic: TwinCritic, batch, targets):
    """One Adam step per twin on mean squared error to shared targets.

    Returns the pre-update losses ``(loss_q1, loss_q2)``.
    """
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (len(batch),):
        raise ContractViolation("targets must have one entry per transition")
    x = critic._inputs(batch.states, batch.actions)
    l1 = _mse_step(critic.q1, critic.q1_adam, x, targets)
    l2 = _mse_step(critic.q2, critic.q2_adam, x, targets)
    return l1, l2
