"""Squashed-Gaussian policy heads.

A head is a diagonal Gaussian over pre-squash space; actions are its tanh
image in (-1, 1)^d. Log-densities carry the tanh change-of-variables
correction, computed in a saturation-safe form. KL between two heads is taken
between the pre-squash Gaussians: tanh is a shared invertible map, so the KL
of the squashed distributions is identical and the diagonal closed form
applies exactly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError

__all__ = [
    "LOG_STD_MIN",
    "LOG_STD_MAX",
    "GaussianHead",
    "ActionSample",
    "sample",
    "log_prob",
    "kl_pre_squash",
    "tanh_log_jacobian",
    "squashed_sample",
    "diag_gaussian_kl",
]

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0

_LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)
# keep squashed actions strictly inside the open cube even at tanh saturation
_ACTION_EPS = 1e-12


@dataclass
class GaussianHead:
    """Pre-squash mean/log-std pair; log_std is clamped to [-20, 2]."""

    mean: np.ndarray
    log_std: np.ndarray

    def __post_init__(self):
        self.mean = np.asarray(self.mean, dtype=np.float64)
        self.log_std = np.asarray(self.log_std, dtype=np.float64)
        if self.mean.shape != self.log_std.shape or self.mean.ndim != 1:
            raise DimensionError(
                f"head needs matching 1-D mean/log_std, got {self.mean.shape} "
                f"and {self.log_std.shape}"
            )
        self.log_std = np.clip(self.log_std, LOG_STD_MIN, LOG_STD_MAX)

    @property
    def dim(self) -> int:
        return self.mean.size


@dataclass
class ActionSample:
    action: np.ndarray  # strictly inside (-1, 1)^d
    log_prob: float


def tanh_log_jacobian(u: np.ndarray) -> np.ndarray:
    """log(1 - tanh(u)^2), elementwise, without cancellation at saturation."""
    return 2.0 * (np.log(2.0) - u - np.logaddexp(0.0, -2.0 * u))


def squashed_sample(mean, log_std, noise):
    """Batched reparameterized draw.

    Arrays broadcast over leading axes; the last axis is the action dimension.
    Returns (action, log_prob summed over the last axis, pre-squash u).
    """
    mean = np.asarray(mean, dtype=np.float64)
    log_std = np.asarray(log_std, dtype=np.float64)
    noise = np.asarray(noise, dtype=np.float64)
    u = mean + np.exp(log_std) * noise
    action = np.clip(np.tanh(u), -1.0 + _ACTION_EPS, 1.0 - _ACTION_EPS)
    lp = -0.5 * noise**2 - log_std - _LOG_SQRT_2PI - tanh_log_jacobian(u)
    return action, lp.sum(axis=-1), u


def sample(head: GaussianHead, noise) -> ActionSample:
    """Draw action = tanh(mean + std * noise) with its squashed log-density."""
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != head.mean.shape:
        raise DimensionError(
            f"noise shape {noise.shape} does not match action dim {head.dim}"
        )
    action, lp, _ = squashed_sample(head.mean, head.log_std, noise)
    return ActionSample(action=action, log_prob=float(lp))


def log_prob(head: GaussianHead, action) -> float:
    """Squashed log-density at a given action strictly inside the open cube."""
    action = np.asarray(action, dtype=np.float64)
    if action.shape != head.mean.shape:
        raise DimensionError(
            f"action shape {action.shape} does not match action dim {head.dim}"
        )
    if np.any(np.abs(action) >= 1.0 - 1e-9):
        raise ValueError("log_prob: action must be pre-clipped inside (-1, 1)")
    u = np.arctanh(action)
    z = (u - head.mean) * np.exp(-head.log_std)
    lp = -0.5 * z**2 - head.log_std - _LOG_SQRT_2PI - tanh_log_jacobian(u)
    return float(lp.sum())


def diag_gaussian_kl(mean_p, log_std_p, mean_q, log_std_q) -> np.ndarray:
    """KL(p || q) for diagonal Gaussians, summed over the last axis. In nats."""
    var_ratio = np.exp(2.0 * (log_std_p - log_std_q))
    delta = (mean_p - mean_q) * np.exp(-log_std_q)
    per_dim = (log_std_q - log_std_p) + 0.5 * (var_ratio + delta**2) - 0.5
    return per_dim.sum(axis=-1)


def kl_pre_squash(p: GaussianHead, q: GaussianHead) -> float:
    """Closed-form KL(p || q) between the pre-squash Gaussians; >= 0."""
    if p.dim != q.dim:
        raise DimensionError(f"KL between heads of dims {p.dim} and {q.dim}")
    return float(diag_gaussian_kl(p.mean, p.log_std, q.mean, q.log_std))
