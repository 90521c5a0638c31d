"""Uniform replay buffer with per-state source-policy head caching.

Source heads are computed once when a transition is stored and never again;
gradient-time code reads them back from the buffer. This keeps the number of
source-policy forward passes at one per environment step per source.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .distributions import GaussianHead
from .errors import DimensionError

__all__ = ["Transition", "Batch", "ReplayBuffer"]


@dataclass
class Transition:
    state: np.ndarray
    action: np.ndarray
    reward: float
    next_state: np.ndarray
    done: bool
    source_heads: List[GaussianHead]


@dataclass
class Batch:
    """Columnar minibatch. ``source_means``/``source_log_stds`` have shape
    (n_sources, batch, action_dim)."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray
    source_means: np.ndarray
    source_log_stds: np.ndarray

    @property
    def size(self) -> int:
        return self.states.shape[0]

    @property
    def n_sources(self) -> int:
        return self.source_means.shape[0]


class ReplayBuffer:
    """Ring buffer; oldest entries are overwritten first once full."""

    def __init__(self, capacity: int, state_dim: int, action_dim: int,
                 n_sources: int = 0):
        if capacity < 1:
            raise ValueError("capacity must be at least 1")
        self.capacity = capacity
        self.state_dim = state_dim
        self.action_dim = action_dim
        self.n_sources = n_sources
        self.size = 0
        self.write_cursor = 0
        self._states = np.zeros((capacity, state_dim))
        self._actions = np.zeros((capacity, action_dim))
        self._rewards = np.zeros(capacity)
        self._next_states = np.zeros((capacity, state_dim))
        self._dones = np.zeros(capacity)
        self._source_means = np.zeros((capacity, n_sources, action_dim))
        self._source_log_stds = np.zeros((capacity, n_sources, action_dim))

    def __len__(self) -> int:
        return self.size

    def push(self, t: Transition) -> None:
        if len(t.source_heads) != self.n_sources:
            raise DimensionError(
                f"transition carries {len(t.source_heads)} source heads, "
                f"buffer is configured for {self.n_sources}"
            )
        action = np.asarray(t.action, dtype=np.float64)
        if np.any(np.abs(action) > 1.0):
            raise ValueError("action outside the unit cube")
        i = self.write_cursor
        self._states[i] = t.state
        self._actions[i] = action
        self._rewards[i] = t.reward
        self._next_states[i] = t.next_state
        self._dones[i] = float(t.done)
        for k, head in enumerate(t.source_heads):
            self._source_means[i, k] = head.mean
            self._source_log_stds[i, k] = head.log_std
        self.write_cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def _check_request(self, batch_size: int) -> None:
        if batch_size < 1:
            raise ValueError("batch_size must be at least 1")
        if self.size < batch_size:
            raise ValueError(
                f"buffer holds {self.size} transitions, cannot sample {batch_size}"
            )

    def sample_indices(self, batch_size: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform with replacement; deterministic given the rng state."""
        self._check_request(batch_size)
        return rng.integers(0, self.size, size=batch_size)

    def transition_at(self, i: int) -> Transition:
        heads = [
            GaussianHead(self._source_means[i, k].copy(),
                         self._source_log_stds[i, k].copy())
            for k in range(self.n_sources)
        ]
        return Transition(
            state=self._states[i].copy(),
            action=self._actions[i].copy(),
            reward=float(self._rewards[i]),
            next_state=self._next_states[i].copy(),
            done=bool(self._dones[i]),
            source_heads=heads,
        )

    def sample(self, batch_size: int, rng: np.random.Generator) -> List[Transition]:
        idx = self.sample_indices(batch_size, rng)
        return [self.transition_at(int(i)) for i in idx]

    def sample_batch(self, batch_size: int, rng: np.random.Generator) -> Batch:
        """Columnar variant of :meth:`sample`; same index draw."""
        idx = self.sample_indices(batch_size, rng)
        return Batch(
            states=self._states[idx],
            actions=self._actions[idx],
            rewards=self._rewards[idx],
            next_states=self._next_states[idx],
            dones=self._dones[idx],
            source_means=self._source_means[idx].transpose(1, 0, 2),
            source_log_stds=self._source_log_stds[idx].transpose(1, 0, 2),
        )
