"""Replay buffer and the on-policy buffer used to train the option network."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ContractViolation, InsufficientDataError


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    terminal: bool
    behavior_log_density: float
    option_id: int = 0


@dataclass
class TransitionBatch:
    """Column-stacked transitions."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    terminals: np.ndarray
    behavior_log_densities: np.ndarray
    option_ids: np.ndarray

    def __len__(self):
        return len(self.rewards)

    def __getitem__(self, i) -> Transition:
        return Transition(self.states[i], self.actions[i], float(self.rewards[i]),
                          self.next_states[i], bool(self.terminals[i]),
                          float(self.behavior_log_densities[i]), int(self.option_ids[i]))

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    def subset(self, idx) -> "TransitionBatch":
        return TransitionBatch(self.states[idx], self.actions[idx], self.rewards[idx],
                               self.next_states[idx], self.terminals[idx],
                               self.behavior_log_densities[idx], self.option_ids[idx])

    @classmethod
    def from_transitions(cls, transitions) -> "TransitionBatch":
        ts = list(transitions)
        return cls(
            np.array([t.state for t in ts], dtype=np.float64),
            np.array([t.action for t in ts], dtype=np.float64),
            np.array([t.reward for t in ts], dtype=np.float64),
            np.array([t.next_state for t in ts], dtype=np.float64),
            np.array([t.terminal for t in ts], dtype=bool),
            np.array([t.behavior_log_density for t in ts], dtype=np.float64),
            np.array([t.option_id for t in ts], dtype=np.int64),
        )


def _validate(t: Transition, state_dim: int, action_dim: int, option_count: int):
    if np.shape(t.state) != (state_dim,) or np.shape(t.next_state) != (state_dim,):
        raise ContractViolation(f"state must have {state_dim} entries")
    if np.shape(t.action) != (action_dim,):
        raise ContractViolation(f"action must have {action_dim} entries")
    if not np.isfinite(t.behavior_log_density):
        raise ContractViolation("behavior_log_density must be finite")
    if not np.isfinite(t.reward):
        raise ContractViolation("reward must be finite")
    if not 0 <= int(t.option_id) < option_count:
        raise ContractViolation(f"option_id {t.option_id} outside [0, {option_count})")


class _ArrayStore:
    def __init__(self, capacity, state_dim, action_dim, option_count):
        if capacity < 1:
            raise ContractViolation("capacity must be positive")
        self.capacity = int(capacity)
        self.state_dim = int(state_dim)
        self.action_dim = int(action_dim)
        self.option_count = int(option_count)
        self._states = np.empty((0, state_dim))
        self._actions = np.empty((0, action_dim))
        self._rewards = np.empty(0)
        self._next_states = np.empty((0, state_dim))
        self._terminals = np.empty(0, dtype=bool)
        self._log_dens = np.empty(0)
        self._options = np.empty(0, dtype=np.int64)
        self._size = 0

    def _grow(self, need):
        # geometric growth keeps pushes amortized O(1) without allocating capacity up front
        cap = len(self._rewards)
        if need <= cap:
            return
        new = min(self.capacity, max(need, 2 * cap, 1024))
        def ext(a):
            out = np.empty((new,) + a.shape[1:], dtype=a.dtype)
            out[:cap] = a
            return out
        self._states = ext(self._states)
        self._actions = ext(self._actions)
        self._rewards = ext(self._rewards)
        self._next_states = ext(self._next_states)
        self._terminals = ext(self._terminals)
        self._log_dens = ext(self._log_dens)
        self._options = ext(self._options)

    def _write(self, k, t: Transition):
        self._states[k] = t.state
        self._actions[k] = t.action
        self._rewards[k] = t.reward
        self._next_states[k] = t.next_state
        self._terminals[k] = t.terminal
        self._log_dens[k] = t.behavior_log_density
        self._options[k] = t.option_id

    def _gather(self, idx) -> TransitionBatch:
        return TransitionBatch(self._states[idx], self._actions[idx], self._rewards[idx],
                               self._next_states[idx], self._terminals[idx],
                               self._log_dens[idx], self._options[idx])

    def __len__(self):
        return self._size


class ReplayBuffer(_ArrayStore):
    """Fixed-capacity ring; the oldest transition is evicted once full."""

    def __init__(self, capacity, state_dim, action_dim, option_count=1):
        super().__init__(capacity, state_dim, action_dim, option_count)
        self._cursor = 0

    def push(self, t: Transition) -> "ReplayBuffer":
        _validate(t, self.state_dim, self.action_dim, self.option_count)
        if self._size < self.capacity:
            self._grow(self._size + 1)
        self._write(self._cursor, t)
        self._cursor = (self._cursor + 1) % self.capacity
        self._size = min(self._size + 1, self.capacity)
        return self

    def _order(self):
        if self._size < self.capacity:
            return np.arange(self._size)
        return (np.arange(self.capacity) + self._cursor) % self.capacity

    def contents(self) -> TransitionBatch:
        """All stored transitions, oldest first."""
        return self._gather(self._order())

    def sample(self, n: int, rng: np.random.Generator) -> TransitionBatch:
        if n < 1:
            raise ContractViolation("batch size must be positive")
        if self._size < n:
            raise InsufficientDataError(f"buffer holds {self._size} transitions, {n} requested")
        return self._gather(rng.integers(0, self._size, size=n))


class OnPolicyBuffer(_ArrayStore):
    """Holds the most recent transitions until it fills; cleared after each option-net round."""

    def __init__(self, capacity=5000, state_dim=1, action_dim=1, option_count=1):
        super().__init__(capacity, state_dim, action_dim, option_count)

    def push(self, t: Transition) -> bool:
        """Append ``t``; returns False (and stores nothing) when already full."""
        _validate(t, self.state_dim, self.action_dim, self.option_count)
        if self._size >= self.capacity:
            return False
        self._grow(self._size + 1)
        self._write(self._size, t)
        self._size += 1
        return True

    def is_full(self) -> bool:
        return self._size >= self.capacity

    def clear(self):
        self._size = 0

    def contents(self) -> TransitionBatch:
        return self._gather(np.arange(self._size))


def buffer_push(buffer, t: Transition):
    buffer.push(t)
    return buffer


def sample_batch(buffer: ReplayBuffer, n: int, rng: np.random.Generator) -> TransitionBatch:
    """``n`` transitions drawn uniformly with replacement."""
    return buffer.sample(n, rng)
