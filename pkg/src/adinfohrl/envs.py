"""Toy continuous-control tasks whose advantage landscape has several modes."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ContractViolation


@dataclass(frozen=True)
class EnvSpec:
    state_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray
    max_episode_steps: int

    def __post_init__(self):
        if self.state_dim < 1 or self.action_dim < 1:
            raise ConfigurationError("state_dim and action_dim must be >= 1")
        if self.max_episode_steps < 1:
            raise ConfigurationError("max_episode_steps must be >= 1")
        if not np.all(self.action_low < self.action_high):
            raise ConfigurationError("action_low must be below action_high")

    @property
    def action_scale(self) -> np.ndarray:
        return (self.action_high - self.action_low) / 2.0

    @property
    def action_center(self) -> np.ndarray:
        return (self.action_high + self.action_low) / 2.0


@dataclass
class StepResult:
    next_state: np.ndarray
    reward: float
    terminal: bool
    truncated: bool


class Env:
    """Base class. Subclasses implement ``_initial_state`` and ``_transition``."""

    name = "env"
    spec: EnvSpec

    def __init__(self):
        self._rng = np.random.default_rng()
        self._state = None
        self._t = 0
        self._done = True

    def reset(self, seed=None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self._state = self._initial_state()
        self._t = 0
        self._done = False
        return self._state.copy()

    def step(self, action) -> StepResult:
        if self._done:
            raise ContractViolation("step called on a finished episode; call reset first")
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        if action.shape != (self.spec.action_dim,):
            raise ContractViolation(f"action must have {self.spec.action_dim} entries")
        if not np.isfinite(action).all():
            raise ContractViolation("action contains non-finite entries")
        action = np.clip(action, self.spec.action_low, self.spec.action_high)
        next_state, reward, terminal = self._transition(self._state, action)
        self._t += 1
        truncated = (not terminal) and self._t >= self.spec.max_episode_steps
        self._state = next_state
        self._done = terminal or truncated
        return StepResult(next_state.copy(), float(reward), bool(terminal), bool(truncated))

    def probe_states(self) -> np.ndarray:
        """Fixed states used to compare option-policy actions."""
        raise NotImplementedError

    def rng_state(self) -> dict:
        return self._rng.bit_generator.state

    def set_rng_state(self, state: dict):
        self._rng.bit_generator.state = state

    def _initial_state(self) -> np.ndarray:
        raise NotImplementedError

    def _transition(self, state, action):
        raise NotImplementedError


class BimodalBandit(Env):
    """One state, one step. Reward is the sum of Gaussian bumps at the mode centers.

    ``r(a) = sum_k exp(-(a - c_k)^2 / width)``; with the defaults the two global
    maxima sit at a = -0.5 and a = +0.5 and the valley at a = 0 pays ~7.5e-6.
    """

    name = "bimodal-bandit"

    def __init__(self, mode_centers=(-0.5, 0.5), width=0.02, action_bound=1.0):
        super().__init__()
        if width <= 0:
            raise ConfigurationError("width must be positive")
        self.mode_centers = np.asarray(mode_centers, dtype=np.float64)
        self.width = float(width)
        self.spec = EnvSpec(1, 1, np.array([-action_bound]), np.array([action_bound]), 1)

    def reward(self, a) -> float:
        a = float(np.asarray(a).reshape(-1)[0])
        return float(np.exp(-((a - self.mode_centers) ** 2) / self.width).sum())

    def _initial_state(self):
        return np.zeros(1)

    def _transition(self, state, action):
        return np.zeros(1), self.reward(action), True

    def probe_states(self):
        return np.zeros((1, 1))


class TwoGoalPointMass(Env):
    """Point in [-1, 1]^2 steered by bounded velocity toward either of two goals.

    Reaching within ``goal_radius`` of a goal pays 1 and ends the episode;
    every other step pays ``step_reward``.
    """

    name = "two-goal-pointmass"

    def __init__(self, goals=((0.8, 0.8), (-0.8, 0.8)), goal_radius=0.1, max_speed=0.1,
                 init_range=0.1, step_reward=-0.01, max_episode_steps=200):
        super().__init__()
        self.goals = np.asarray(goals, dtype=np.float64).reshape(-1, 2)
        self.goal_radius = float(goal_radius)
        self.init_range = float(init_range)
        self.step_reward = float(step_reward)
        self.spec = EnvSpec(2, 2, np.full(2, -max_speed), np.full(2, max_speed),
                            int(max_episode_steps))

    def _initial_state(self):
        return self._rng.uniform(-self.init_range, self.init_range, size=2)

    def _transition(self, state, action):
        nxt = np.clip(state + action, -1.0, 1.0)
        dist = np.sqrt(((self.goals - nxt) ** 2).sum(axis=1))
        # small slack so that landing exactly on the radius counts
        if (dist <= self.goal_radius + 1e-12).any():
            return nxt, 1.0, True
        return nxt, self.step_reward, False

    def probe_states(self):
        g = np.linspace(-0.6, 0.6, 5)
        xx, yy = np.meshgrid(g, g)
        return np.stack([xx.ravel(), yy.ravel()], axis=1)


ENVIRONMENTS = {
    BimodalBandit.name: BimodalBandit,
    TwoGoalPointMass.name: TwoGoalPointMass,
}


def make_env(name: str, **params) -> Env:
    try:
        cls = ENVIRONMENTS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown environment {name!r}; choose from {sorted(ENVIRONMENTS)}") from None
    try:
        return cls(**params)
    except TypeError as exc:
        raise ConfigurationError(f"bad parameters for {name}: {exc}") from None
