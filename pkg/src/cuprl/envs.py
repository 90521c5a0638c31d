"""Desk-scale continuous-control tasks and enumerable MDPs.

All point-mass tasks share one state/action space (position, velocity, goal in
the plane; 2-D acceleration commands), so policies trained on one task can be
reused on any other. Task kinds:

* ``reach``       -- goal sampled in the region above the start.
* ``reach_wall``  -- same goal side, but a wall segment blocks the direct
                     path; the agent must detour around its free end.
* ``push_back``   -- goal sampled behind the start point.
* ``random_goal`` -- goal sampled over most of the arena.

``TabularMDP`` provides the enumerable substrate used for exact policy
evaluation and the improvement-bound checks.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DimensionError

__all__ = [
    "TASK_KINDS",
    "SUCCESS_RADIUS",
    "GOAL_BONUS",
    "PointMassState",
    "GoalBox",
    "TaskSpec",
    "make_task",
    "reset",
    "step",
    "observe",
    "OBS_DIM",
    "ACTION_DIM",
    "TabularMDP",
    "make_chain_mdp",
]

TASK_KINDS = ("reach", "reach_wall", "push_back", "random_goal")

SUCCESS_RADIUS = 0.05
GOAL_BONUS = 5.0
ACCEL_GAIN = 0.1
SPEED_GAIN = 0.1
# low terminal speed keeps braking distances well inside the success radius
V_MAX = 0.3
ARENA = 1.0

OBS_DIM = 6  # position (2) + velocity (2) + goal (2)
ACTION_DIM = 2

_START = np.array([0.0, -0.6])


@dataclass
class GoalBox:
    """Uniform goal distribution over an axis-aligned box (point if low == high)."""

    low: np.ndarray
    high: np.ndarray

    def __post_init__(self):
        self.low = np.asarray(self.low, dtype=np.float64)
        self.high = np.asarray(self.high, dtype=np.float64)
        if self.low.shape != (2,) or self.high.shape != (2,):
            raise DimensionError("goal box needs 2-D low/high corners")
        if np.any(self.high < self.low):
            raise ValueError("goal box high corner below low corner")

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.low, self.high)

    @property
    def mean(self) -> np.ndarray:
        return 0.5 * (self.low + self.high)


@dataclass
class TaskSpec:
    task_kind: str
    goal_sampler: GoalBox
    horizon: int = 200
    seed: int = 0
    wall: Optional[np.ndarray] = None  # (2, 2): two endpoints

    def __post_init__(self):
        if self.task_kind not in TASK_KINDS:
            raise ValueError(f"unknown task kind {self.task_kind!r}")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if (self.wall is not None) != (self.task_kind == "reach_wall"):
            raise ValueError("wall must be present exactly for reach_wall tasks")
        if self.wall is not None:
            self.wall = np.asarray(self.wall, dtype=np.float64)
            if self.wall.shape != (2, 2):
                raise DimensionError("wall needs shape (2, 2): two endpoints")


_GOAL_BOXES = {
    "reach": GoalBox(np.array([-0.7, 0.2]), np.array([0.7, 0.8])),
    "reach_wall": GoalBox(np.array([-0.45, 0.45]), np.array([0.45, 0.8])),
    "push_back": GoalBox(np.array([-0.7, -0.95]), np.array([0.7, -0.75])),
    "random_goal": GoalBox(np.array([-0.8, -0.8]), np.array([0.8, 0.8])),
}

# blocks the straight path from the start to most of the reach_wall goal
# region; the free end on the right leaves a discoverable detour
_WALL = np.array([[-0.75, 0.1], [0.05, 0.1]])


def make_task(kind: str, horizon: int = 200, seed: int = 0,
              goal_sampler: Optional[GoalBox] = None) -> TaskSpec:
    """Canonical TaskSpec for a task kind."""
    sampler = goal_sampler if goal_sampler is not None else _GOAL_BOXES[kind]
    wall = _WALL.copy() if kind == "reach_wall" else None
    return TaskSpec(task_kind=kind, goal_sampler=sampler, horizon=horizon,
                    seed=seed, wall=wall)


@dataclass
class PointMassState:
    position: np.ndarray
    velocity: np.ndarray
    goal: np.ndarray
    step_index: int = 0


def reset(spec: TaskSpec, rng: np.random.Generator) -> PointMassState:
    """Initial state: task start point, zero velocity, freshly drawn goal."""
    return PointMassState(
        position=_START.copy(),
        velocity=np.zeros(2),
        goal=spec.goal_sampler.draw(rng),
        step_index=0,
    )


def observe(state: PointMassState) -> np.ndarray:
    return np.concatenate([state.position, state.velocity, state.goal])


def _cross(u: np.ndarray, v: np.ndarray) -> float:
    return float(u[0] * v[1] - u[1] * v[0])


def _crossing_fraction(p, q, a, b) -> Optional[float]:
    """Fraction t along p->q where it crosses segment a-b, or None."""
    d = q - p
    e = b - a
    denom = _cross(d, e)
    if denom == 0.0:
        return None
    f = a - p
    t = _cross(f, e) / denom
    s = _cross(f, d) / denom
    if 0.0 <= t <= 1.0 and 0.0 <= s <= 1.0:
        return t
    return None


def step(state: PointMassState, action, spec: TaskSpec):
    """One transition. Returns (next_state, reward, done, success).

    Velocity and position updates are clipped to their bounds; on a wall
    crossing the position is pulled back to just before the contact point and
    the velocity is zeroed. Reward is negative goal distance plus a bonus
    inside the success radius. Pure in (state, action, spec).
    """
    action = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
    if action.shape != (2,):
        raise DimensionError(f"action must have shape (2,), got {action.shape}")

    velocity = np.clip(state.velocity + ACCEL_GAIN * action, -V_MAX, V_MAX)
    target = np.clip(state.position + SPEED_GAIN * velocity, -ARENA, ARENA)

    if spec.wall is not None:
        t = _crossing_fraction(state.position, target, spec.wall[0], spec.wall[1])
        if t is not None:
            d = target - state.position
            seg_len = float(np.linalg.norm(d))
            back = t - (1e-9 / seg_len if seg_len > 0.0 else 0.0)
            target = state.position + max(0.0, back) * d
            velocity = np.zeros(2)

    dist = float(np.linalg.norm(target - state.goal))
    success = dist < SUCCESS_RADIUS
    reward = -dist + (GOAL_BONUS if success else 0.0)

    next_state = PointMassState(
        position=target,
        velocity=velocity,
        goal=state.goal.copy(),
        step_index=state.step_index + 1,
    )
    done = next_state.step_index >= spec.horizon
    return next_state, reward, done, success


@dataclass
class TabularMDP:
    """Finite MDP with dense reward and transition tensors.

    Rows of ``transition[s, a]`` are probability vectors; ``gamma`` in (0, 1).
    """

    n_states: int
    n_actions: int
    reward: np.ndarray      # (S, A)
    transition: np.ndarray  # (S, A, S)
    gamma: float
    initial_state: int = 0

    def __post_init__(self):
        self.reward = np.asarray(self.reward, dtype=np.float64)
        self.transition = np.asarray(self.transition, dtype=np.float64)
        if self.reward.shape != (self.n_states, self.n_actions):
            raise DimensionError(f"reward tensor has shape {self.reward.shape}")
        if self.transition.shape != (self.n_states, self.n_actions, self.n_states):
            raise DimensionError(f"transition tensor has shape {self.transition.shape}")
        if np.any(self.transition < 0.0):
            raise ValueError("transition probabilities must be non-negative")
        row_sums = self.transition.sum(axis=2)
        if np.any(np.abs(row_sums - 1.0) > 1e-12):
            raise ValueError("transition rows must sum to 1 within 1e-12")
        if not (0.0 < self.gamma < 1.0):
            raise ValueError("gamma must be in (0, 1)")
        if not (0 <= self.initial_state < self.n_states):
            raise ValueError("initial_state out of range")

    @property
    def reward_bound(self) -> float:
        """Largest absolute one-step reward."""
        return float(np.abs(self.reward).max())


def make_chain_mdp(n_states: int, n_actions: int, gamma: float,
                   rng: np.random.Generator) -> TabularMDP:
    """Random MDP: rewards uniform in [-1, 1], flat-Dirichlet transition rows."""
    if n_states < 2 or n_actions < 2:
        raise ValueError("random MDPs need at least 2 states and 2 actions")
    reward = rng.uniform(-1.0, 1.0, size=(n_states, n_actions))
    transition = rng.dirichlet(np.ones(n_states), size=(n_states, n_actions))
    # dirichlet rows are normalized to ~1e-16; tighten to the declared 1e-12
    transition = transition / transition.sum(axis=2, keepdims=True)
    return TabularMDP(n_states=n_states, n_actions=n_actions, reward=reward,
                      transition=transition, gamma=gamma)
