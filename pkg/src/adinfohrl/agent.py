"""The training loop: hierarchical rollouts, buffer bookkeeping and delayed updates."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import log_ndtr

from .buffers import OnPolicyBuffer, ReplayBuffer, Transition
from .config import ExperimentConfig
from .critic import TwinCritic, compute_td_target, critic_update
from .envs import Env, make_env
from .errors import NumericalError
from .hpolicy import (OptionPolicySet, assign_options, dpg_update, gating, greedy_option,
                      sample_option)
from .optionnet import OptionNet, train_option_network

log = logging.getLogger(__name__)

RNG_STREAMS = ("env", "explore", "batch", "option")


def clipped_gaussian_log_density(noise, sigma, clip) -> float:
    """Log density of ``clip(N(0, sigma^2), -clip, clip)`` at ``noise``, summed over dims.

    Interior points use the Gaussian density; points sitting on the clip edge
    use the log of the tail mass that was folded onto them.
    """
    noise = np.asarray(noise, dtype=np.float64)
    total = 0.0
    for e in noise.ravel():
        if abs(e) >= clip:
            total += float(log_ndtr(-clip / sigma))
        else:
            total += -0.5 * (e / sigma) ** 2 - math.log(sigma) - 0.5 * math.log(2 * math.pi)
    return total


@dataclass
class EvalStats:
    mean: float
    std: float
    returns: list
    option_counts: np.ndarray
    success_rate: float


@dataclass
class TrainRecord:
    step: int
    eval_return_mean: float
    eval_return_std: float
    critic_loss_1: float
    critic_loss_2: float
    option_loss: float
    mi_estimate: float
    option_usage: list
    option_action_separation: float
    success_rate: float


@dataclass
class TrainReport:
    config: ExperimentConfig
    seed: int
    records: list = field(default_factory=list)
    option_training_steps: list = field(default_factory=list)


class Agent:
    """All learnable state plus the bookkeeping Algorithm-style training needs."""

    def __init__(self, config: ExperimentConfig, env_spec, seed: int):
        self.config = config
        self.seed = int(seed)
        self.spec = env_spec
        root = np.random.SeedSequence(self.seed)
        init_seq, *stream_seqs = root.spawn(1 + len(RNG_STREAMS))
        self.rngs = {name: np.random.default_rng(s) for name, s in zip(RNG_STREAMS, stream_seqs)}
        init_rng = np.random.default_rng(init_seq)

        o_count = config.effective_option_count
        ds, da = env_spec.state_dim, env_spec.action_dim
        hidden = tuple(config.hidden_sizes)
        self.critic = TwinCritic(ds, da, hidden, init_rng, config.critic_lr)
        self.policies = OptionPolicySet(ds, env_spec.action_low, env_spec.action_high, o_count,
                                        hidden, init_rng, config.actor_lr,
                                        config.option_init_spread)
        self.option_net = None
        if config.mode != "td3":
            self.option_net = OptionNet(ds, da, o_count, hidden, init_rng, config.option_lr,
                                        config.lambda_mi, config.vat_noise_variance)
        self.replay = ReplayBuffer(config.replay_capacity, ds, da, o_count)
        self.on_policy = OnPolicyBuffer(config.on_policy_capacity, ds, da, o_count)

        self.step_count = 0
        self.critic_updates = 0
        self.current_option = 0
        self.steps_since_option_draw = 0
        self.state = None
        self.episode_return = 0.0
        self.episode_options = []
        self.last_option_parts = None
        self.option_training_steps = []
        self.loss_sum = np.zeros(2)
        self.loss_count = 0
        self.empty_option_rounds = np.zeros(o_count, dtype=np.int64)

    @property
    def option_count(self) -> int:
        return self.policies.option_count

    def in_warmup(self) -> bool:
        return len(self.replay) < self.config.warmup_threshold

    # acting

    def act_explore(self, state, rng=None):
        """Returns ``(action, option, behavior_log_density)`` and advances the option clock."""
        rng = self.rngs["explore"] if rng is None else rng
        cfg = self.config
        if self.steps_since_option_draw == 0:
            self.current_option = sample_option(gating(self.policies, self.critic, state), rng)
        o = self.current_option
        low, high, scale = self.policies.low, self.policies.high, self.policies.scale
        if self.in_warmup():
            action = rng.uniform(low, high)
            log_density = -float(np.log(high - low).sum())
        else:
            mu = self.policies.actions(o, np.reshape(state, (1, -1)))[0]
            if cfg.exploration_sigma > 0:
                eps = np.clip(rng.normal(0.0, cfg.exploration_sigma, size=mu.shape),
                              -cfg.noise_clip, cfg.noise_clip)
                action = np.clip(mu + eps * scale, low, high)
                log_density = (clipped_gaussian_log_density(eps, cfg.exploration_sigma, cfg.noise_clip)
                               - float(np.log(scale).sum()))
            else:
                action, log_density = mu, 0.0
        return action, o, log_density

    # learning

    def learn(self, batch, actor_batch=None):
        """One critic step; every ``policy_delay`` critic steps also the actors and targets.

        Returns the two critic losses.
        """
        cfg = self.config
        targets = compute_td_target(self.critic, batch, self.policies, cfg.gamma,
                                    cfg.target_noise_sigma, cfg.noise_clip, self.rngs["batch"])
        losses = critic_update(self.critic, batch, targets)
        self.critic_updates += 1
        if self.critic_updates % cfg.policy_delay == 0:
            if actor_batch is None:
                actor_batch = self.replay.sample(cfg.actor_batch_total, self.rngs["batch"])
            if self.option_net is None:
                assignments = np.zeros(len(actor_batch), dtype=np.int64)
            elif not self.option_training_steps:
                # the option net is still untrained; trust the option that acted
                assignments = np.asarray(actor_batch.option_ids, dtype=np.int64)
            else:
                assignments = assign_options(self.option_net, actor_batch)
            counts = np.bincount(assignments, minlength=self.option_count)
            self.empty_option_rounds += counts == 0
            dpg_update(self.policies, self.critic, actor_batch.states, assignments)
            self.critic.soft_update_targets(cfg.tau)
            self.policies.soft_update_targets(cfg.tau)
        return losses

    def train_option_net(self):
        cfg = self.config
        trace = train_option_network(
            self.option_net, self.on_policy, self.critic, self.policies, cfg.option_net_epochs,
            cfg.option_batch, self.rngs["option"], uniform_weights=cfg.mode == "infohrl")
        if trace:
            self.last_option_parts = trace[-1]
        self.option_training_steps.append(self.step_count)

    def train_step(self, env: Env):
        cfg = self.config
        if self.state is None:
            self.state = env.reset(int(self.rngs["env"].integers(2**63)))
            self.steps_since_option_draw = 0
        state = self.state
        action, option, log_density = self.act_explore(state)
        res = env.step(action)
        t = Transition(state, action, res.reward, res.next_state, res.terminal, log_density, option)
        self.replay.push(t)
        self.on_policy.push(t)
        self.step_count += 1
        self.episode_return += res.reward

        if self.on_policy.is_full():
            if self.option_net is not None:
                self.train_option_net()
            self.on_policy.clear()

        if not self.in_warmup():
            batch = self.replay.sample(cfg.critic_batch, self.rngs["batch"])
            l1, l2 = self.learn(batch)
            self.loss_sum += (l1, l2)
            self.loss_count += 1

        if res.terminal or res.truncated:
            self.state = env.reset()
            self.steps_since_option_draw = 0
            self.episode_return = 0.0
        else:
            self.state = res.next_state
            self.steps_since_option_draw = (self.steps_since_option_draw + 1) % cfg.option_hold
        return self

    def pop_losses(self):
        if self.loss_count == 0:
            return 0.0, 0.0
        out = self.loss_sum / self.loss_count
        self.loss_sum[:] = 0.0
        self.loss_count = 0
        return float(out[0]), float(out[1])

    def option_action_separation(self, probe_states) -> float:
        """Mean pairwise distance between option actions, averaged over probe states."""
        if self.option_count < 2:
            return 0.0
        acts = self.policies.all_actions(probe_states)
        dists = []
        for i in range(self.option_count):
            for j in range(i + 1, self.option_count):
                dists.append(np.sqrt(((acts[i] - acts[j]) ** 2).sum(axis=1)).mean())
        return float(np.mean(dists))


def evaluate(agent: Agent, env: Env, episodes: int, rng) -> EvalStats:
    """Noise-free rollouts with the greedy option rule, option held as in training."""
    if episodes < 1:
        raise ValueError("episodes must be >= 1")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    returns = []
    counts = np.zeros(agent.option_count, dtype=np.int64)
    successes = 0
    hold = agent.config.option_hold
    for _ in range(episodes):
        state = env.reset(int(rng.integers(2**63)))
        total, k = 0.0, 0
        while True:
            if k % hold == 0:
                option = greedy_option(agent.policies, agent.critic, state)
            counts[option] += 1
            action = agent.policies.actions(option, state[None, :])[0]
            res = env.step(action)
            total += res.reward
            k += 1
            if res.terminal or res.truncated:
                successes += res.terminal
                break
            state = res.next_state
        returns.append(total)
    # shifting by the first return keeps identical returns at exactly zero spread
    d = np.array(returns) - returns[0]
    return EvalStats(float(returns[0] + d.mean()), float(d.std()), returns, counts,
                     successes / episodes)


def eval_seed(seed: int) -> int:
    return int(np.random.SeedSequence([int(seed), 0xE7A1]).generate_state(1)[0])


def run_training(config: ExperimentConfig, seed=None, callback=None) -> TrainReport:
    """Run ``total_steps`` training steps, evaluating every ``eval_interval`` steps.

    ``callback(agent, record)`` is called after each evaluation (for logging
    and checkpointing). A ``NumericalError`` raised from here carries the
    failing agent as ``exc.agent`` so the caller can write a diagnostic
    checkpoint.
    """
    config.validate()
    seed = config.seeds[0] if seed is None else seed
    env = make_env(config.env_name, **config.env_params)
    eval_env = make_env(config.env_name, **config.env_params)
    agent = Agent(config, env.spec, seed)
    report = TrainReport(config, seed)
    probes = env.probe_states()
    for step in range(1, config.total_steps + 1):
        try:
            agent.train_step(env)
        except NumericalError as exc:
            err = NumericalError(f"step {step} (seed {seed}): {exc}")
            err.agent = agent
            raise err from exc
        if step % config.eval_interval == 0:
            stats = evaluate(agent, eval_env, config.eval_episodes, eval_seed(seed))
            l1, l2 = agent.pop_losses()
            parts = agent.last_option_parts
            usage = stats.option_counts / max(stats.option_counts.sum(), 1)
            record = TrainRecord(
                step, stats.mean, stats.std, l1, l2,
                0.0 if parts is None else float(parts.loss),
                0.0 if parts is None else float(parts.mutual_information),
                usage.tolist(), agent.option_action_separation(probes), stats.success_rate)
            values = [record.eval_return_mean, record.eval_return_std, l1, l2,
                      record.option_loss, record.mi_estimate, record.option_action_separation]
            if not np.isfinite(values).all():
                err = NumericalError(f"step {step} (seed {seed}): non-finite metrics {values}")
                err.agent = agent
                raise err
            report.records.append(record)
            log.info("seed %d step %d return %.4f +- %.4f", seed, step, stats.mean, stats.std)
            if callback is not None:
                callback(agent, record)
    report.option_training_steps = list(agent.option_training_steps)
    report.agent = agent
    return report
