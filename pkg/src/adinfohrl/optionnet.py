"""Option network p(o | s, a) trained by advantage-weighted information maximization.

The loss minimized is ``vat - lambda * (H[p_hat(o)] - H[o | s, a])`` where both
entropies are importance-weighted sample estimates and ``vat`` is the KL
divergence between the posterior at white-noise-perturbed inputs and the
posterior at the clean inputs.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import ndmath
from .errors import ContractViolation, InsufficientDataError

# floor inside logs; softmax outputs below it contribute nothing measurable
_LOG_FLOOR = 1e-300


def _log(p):
    return np.log(np.maximum(p, _LOG_FLOOR))


class OptionNet:
    def __init__(self, state_dim, action_dim, option_count, hidden_sizes=(64, 64), rng=None,
                 learning_rate=1e-3, lambda_mi=0.1, vat_noise_variance=0.04):
        if option_count < 2:
            raise ContractViolation("the option network needs at least two options")
        if lambda_mi < 0 or vat_noise_variance <= 0:
            raise ContractViolation("lambda_mi must be >= 0 and vat_noise_variance > 0")
        rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
        sizes = [state_dim + action_dim, *hidden_sizes, option_count]
        acts = ["relu"] * len(hidden_sizes) + ["softmax"]
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.option_count = int(option_count)
        self.lambda_mi = float(lambda_mi)
        self.vat_noise_variance = float(vat_noise_variance)
        self.net = ndmath.net_init(sizes, acts, rng)
        self.adam = ndmath.adam_init(self.net, learning_rate)

    def inputs(self, states, actions) -> np.ndarray:
        return np.concatenate([np.atleast_2d(states), np.atleast_2d(actions)], axis=1)

    def posteriors(self, states, actions) -> np.ndarray:
        return ndmath.forward(self.net, self.inputs(states, actions))


@dataclass
class WeightedBatch:
    states: np.ndarray
    actions: np.ndarray
    advantages: np.ndarray
    behavior_log_densities: np.ndarray
    weights: np.ndarray

    def __len__(self):
        return len(self.weights)

    @classmethod
    def build(cls, states, actions, advantages, behavior_log_densities, uniform=False):
        adv = np.asarray(advantages, dtype=np.float64)
        logb = np.asarray(behavior_log_densities, dtype=np.float64)
        w = np.ones(len(adv)) if uniform else importance_weights(adv, logb)
        return cls(np.atleast_2d(states), np.atleast_2d(actions), adv, logb, w)


def compute_advantages(critic, policy_set, batch) -> np.ndarray:
    """``A(s, a) = Q_min(s, a) - V(s)`` with V the gating-weighted option value."""
    from .hpolicy import state_values

    q = critic.q_values(batch.states, batch.actions, "min")
    return q - state_values(policy_set, critic, batch.states)


def importance_weights(advantages, behavior_log_densities) -> np.ndarray:
    """``exp(A) / beta`` normalized to mean one.

    Computed in log space with the max subtracted; the partition function and
    any common factor of the densities cancel in the normalization.
    """
    adv = np.asarray(advantages, dtype=np.float64)
    logb = np.asarray(behavior_log_densities, dtype=np.float64)
    if adv.shape != logb.shape or adv.ndim != 1 or len(adv) == 0:
        raise ContractViolation("advantages and densities must be equal-length non-empty vectors")
    if not (np.isfinite(adv).all() and np.isfinite(logb).all()):
        raise ContractViolation("advantages and densities must be finite")
    log_w = adv - logb
    w = np.exp(log_w - log_w.max())
    return w * (len(w) / w.sum())


def weighted_marginal_from(posteriors, weights) -> np.ndarray:
    return (weights[:, None] * posteriors).sum(axis=0) / len(weights)


def weighted_marginal(option_net: OptionNet, batch: WeightedBatch) -> np.ndarray:
    """``p_hat(o) = (1/N) sum_i w_i p(o | s_i, a_i)``."""
    if len(batch) == 0:
        raise ContractViolation("empty batch")
    return weighted_marginal_from(option_net.posteriors(batch.states, batch.actions), batch.weights)


def weighted_entropy(marginal) -> float:
    """``-sum p log p`` with ``0 log 0 = 0``."""
    p = np.asarray(marginal, dtype=np.float64)
    nz = p[p > 0]
    return float(-(nz * np.log(nz)).sum())


def weighted_conditional_entropy_from(posteriors, weights) -> float:
    per_sample = -(posteriors * _log(posteriors)).sum(axis=1)
    return float((weights * per_sample).sum() / len(weights))


def weighted_conditional_entropy(option_net: OptionNet, batch: WeightedBatch) -> float:
    """``-(1/N) sum_i w_i sum_o p log p``, a nonnegative entropy."""
    if len(batch) == 0:
        raise ContractViolation("empty batch")
    return weighted_conditional_entropy_from(
        option_net.posteriors(batch.states, batch.actions), batch.weights)


def draw_vat_noise(option_net: OptionNet, n: int, rng: np.random.Generator) -> np.ndarray:
    """White noise for states and actions, one row per sample."""
    std = np.sqrt(option_net.vat_noise_variance)
    return rng.normal(0.0, std, size=(n, option_net.state_dim + option_net.action_dim))


def kl_rows(p, q) -> np.ndarray:
    return (p * (_log(p) - _log(q))).sum(axis=1)


def vat_penalty(option_net: OptionNet, batch, noise_variance=None, rng=None, noise=None) -> float:
    """Batch mean of ``KL(p(o | s + e_s, a + e_a) || p(o | s, a))``.

    Pass ``noise`` to reuse a frozen draw; otherwise it is sampled from ``rng``
    with ``noise_variance`` (default: the network's setting).
    """
    x = option_net.inputs(batch.states, batch.actions)
    if noise is None:
        var = option_net.vat_noise_variance if noise_variance is None else noise_variance
        if var < 0:
            raise ContractViolation("noise_variance must be nonnegative")
        noise = rng.normal(0.0, np.sqrt(var), size=x.shape)
    clean = ndmath.forward(option_net.net, x)
    pert = ndmath.forward(option_net.net, x + noise)
    return float(max(kl_rows(pert, clean).mean(), 0.0))


@dataclass
class OptionLossParts:
    loss: float
    vat: float
    marginal_entropy: float
    conditional_entropy: float

    @property
    def mutual_information(self) -> float:
        return self.marginal_entropy - self.conditional_entropy


def option_loss_and_grad(option_net: OptionNet, batch: WeightedBatch, noise: np.ndarray):
    """Loss value, its parts, and the exact parameter gradient for a fixed noise draw."""
    net = option_net.net
    n = len(batch)
    w = batch.weights
    lam = option_net.lambda_mi
    x = option_net.inputs(batch.states, batch.actions)
    clean_acts = ndmath.trace(net, x)
    pert_acts = ndmath.trace(net, x + noise)
    p = clean_acts[-1]
    pt = pert_acts[-1]
    log_p = _log(p)
    log_pt = _log(pt)

    marginal = (w[:, None] * p).sum(axis=0) / n
    log_m = _log(marginal)
    h_marg = float(-(marginal * log_m).sum())
    h_cond = float((w * -(p * log_p).sum(axis=1)).sum() / n)
    vat = float((pt * (log_pt - log_p)).sum() / n)
    loss = vat - lam * (h_marg - h_cond)

    # d/dp of each term, rows are samples
    d_hmarg = (w[:, None] / n) * (-log_m - 1.0)[None, :]
    d_hcond = -(w[:, None] / n) * (log_p + 1.0)
    d_vat_clean = -(pt / np.maximum(p, _LOG_FLOOR)) / n
    d_vat_pert = (log_pt - log_p + 1.0) / n
    g_clean = d_vat_clean - lam * (d_hmarg - d_hcond)
    grads = ndmath.backward_from_trace(net, clean_acts, g_clean)
    grads = grads + ndmath.backward_from_trace(net, pert_acts, d_vat_pert)
    return OptionLossParts(loss, vat, h_marg, h_cond), grads


def option_loss(option_net: OptionNet, batch: WeightedBatch, rng=None, noise=None) -> float:
    if noise is None:
        noise = draw_vat_noise(option_net, len(batch), rng)
    parts, _ = option_loss_and_grad(option_net, batch, noise)
    return parts.loss


def fit_option_network(option_net: OptionNet, states, actions, advantages, behavior_log_densities,
                       epochs, minibatch_size, rng, uniform_weights=False):
    """Minibatch Adam descent on the option loss over a fixed dataset.

    Advantages are frozen for the whole call; each minibatch renormalizes its
    own importance weights to mean one. Returns one ``OptionLossParts`` per
    epoch (averaged over that epoch's minibatches).
    """
    states = np.atleast_2d(np.asarray(states, dtype=np.float64))
    actions = np.atleast_2d(np.asarray(actions, dtype=np.float64))
    advantages = np.asarray(advantages, dtype=np.float64)
    logb = np.asarray(behavior_log_densities, dtype=np.float64)
    n = len(states)
    if n == 0:
        raise InsufficientDataError("no samples to train the option network on")
    trace_out = []
    for _ in range(epochs):
        order = rng.permutation(n)
        parts_sum = np.zeros(4)
        count = 0
        for start in range(0, n, minibatch_size):
            idx = order[start:start + minibatch_size]
            batch = WeightedBatch.build(states[idx], actions[idx], advantages[idx], logb[idx],
                                        uniform=uniform_weights)
            noise = draw_vat_noise(option_net, len(idx), rng)
            parts, grads = option_loss_and_grad(option_net, batch, noise)
            ndmath.adam_step(option_net.adam, option_net.net, grads)
            parts_sum += (parts.loss, parts.vat, parts.marginal_entropy, parts.conditional_entropy)
            count += 1
        trace_out.append(OptionLossParts(*(parts_sum / count)))
    return trace_out


def train_option_network(option_net: OptionNet, on_policy, critic, policy_set, epochs,
                         minibatch_size, rng, uniform_weights=False):
    """One training round on the full on-policy buffer.

    Advantages come from the current critic and policies, computed once at the
    start. The caller clears the buffer afterwards.
    """
    if len(on_policy) == 0:
        raise InsufficientDataError("on-policy buffer is empty")
    data = on_policy.contents()
    advantages = compute_advantages(critic, policy_set, data)
    return fit_option_network(option_net, data.states, data.actions, advantages,
                              data.behavior_log_densities, epochs, minibatch_size, rng,
                              uniform_weights=uniform_weights)
