"""Critic-guided policy reuse.

At each state the agent holds a candidate set: the cached heads of the frozen
source policies plus its own current head. Every candidate is scored by a
K-sample estimate of its expected soft value under the target critic; the
argmax becomes the guidance head for that state, with ties resolved toward
the agent's own head. The actor loss then adds a per-state KL pull toward the
guidance head, weighted by how much improvement the guidance promises:

    weight = beta1 * min(expected_advantage, beta2 * |estimated state value|)

The weight vanishes wherever the agent's own head wins, so the regularizer
switches itself off as the reused policies stop helping. No gradient flows
through the weight, the chosen head, or the argmax; the guidance is a fixed
imitation target within each gradient step.

With an empty source set every code path below reduces exactly to plain SAC.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .distributions import GaussianHead, LOG_STD_MAX, LOG_STD_MIN, diag_gaussian_kl, squashed_sample
from .errors import CheckpointError, DimensionError
from .replay import Batch, ReplayBuffer
from .sac import (
    SacAgent,
    actor_heads,
    actor_loss,
    actor_loss_with_critic,
    critic_value,
    load_checkpoint,
    train_on_batch,
    _activations,
    _finish_step,
    _live_critic_min,
    _update_critics,
)
from .tensor import ParamVector, mlp_forward, mlp_init

__all__ = [
    "CupConfig",
    "CandidateSet",
    "GuidanceChoice",
    "GuidanceBatchStats",
    "SourcePolicy",
    "estimate_soft_value",
    "form_guidance",
    "adaptive_weight",
    "cup_actor_loss",
    "cup_train_step",
    "selection_stats",
    "write_selection_csv",
]


@dataclass
class CupConfig:
    beta1: float = 30.0
    beta2: float = 3e-3
    n_advantage_samples: int = 3
    regularization_start_step: int = 5_000
    advantage_uses_max_of_target_critics: bool = True
    # trained source heads can be near-deterministic; flooring the guidance
    # std inside the KL term keeps its gradient (scaled by 1/sigma_q^2) from
    # swamping the actor objective. Selection still uses the true heads.
    kl_guidance_log_std_floor: float = -1.0

    def __post_init__(self):
        if self.beta1 <= 0.0 or self.beta2 <= 0.0:
            raise ValueError("beta1 and beta2 must be positive")
        if self.n_advantage_samples < 1:
            raise ValueError("need at least one advantage sample")
        if self.regularization_start_step < 0:
            raise ValueError("regularization_start_step must be non-negative")


@dataclass
class CandidateSet:
    """Source heads plus the agent's own head; the agent's head is last."""

    source_heads: List[GaussianHead]
    target_head: GaussianHead

    @property
    def n_sources(self) -> int:
        return len(self.source_heads)

    def heads(self) -> List[GaussianHead]:
        return [*self.source_heads, self.target_head]


@dataclass
class GuidanceChoice:
    chosen_index: int
    chosen_head: GaussianHead
    expected_advantage: float     # chosen estimate minus the agent head's estimate
    target_value_estimate: float  # the agent head's own estimated soft value


class SourcePolicy:
    """Frozen actor reused as a source of candidate action distributions.

    Counts its forward passes so the one-query-per-environment-step caching
    contract can be asserted.
    """

    def __init__(self, actor: ParamVector, obs_dim: int, action_dim: int):
        self.actor = actor
        self.obs_dim = obs_dim
        self.action_dim = action_dim
        self.forward_count = 0
        self._acts = _activations(len(actor.shapes))

    @classmethod
    def from_checkpoint(cls, path) -> "SourcePolicy":
        agent, _ = load_checkpoint(path)
        return cls(agent.actor, agent.obs_dim, agent.action_dim)

    @classmethod
    def random(cls, obs_dim: int, action_dim: int, hidden: tuple,
               rng: np.random.Generator) -> "SourcePolicy":
        actor = mlp_init((obs_dim, *hidden, 2 * action_dim), rng)
        return cls(actor, obs_dim, action_dim)

    def head(self, obs: np.ndarray) -> GaussianHead:
        if obs.shape != (self.obs_dim,):
            raise DimensionError(
                f"source policy expects observations of shape ({self.obs_dim},), "
                f"got {obs.shape}"
            )
        self.forward_count += 1
        out = mlp_forward(self.actor, obs, self._acts)
        d = self.action_dim
        return GaussianHead(out[:d], np.clip(out[d:], LOG_STD_MIN, LOG_STD_MAX))


def estimate_soft_value(head: GaussianHead, critic_eval: Callable, state: np.ndarray,
                        alpha: float, k: int, rng: np.random.Generator) -> float:
    """K-sample estimate of E_{a~head}[Q(s, a) - alpha log head(a|s)]."""
    if k < 1:
        raise ValueError("need at least one sample")
    if alpha < 0.0:
        raise ValueError("alpha must be non-negative")
    noise = rng.standard_normal((k, head.dim))
    actions, logp, _ = squashed_sample(head.mean, head.log_std, noise)
    states = np.broadcast_to(state, (k, state.size))
    q = critic_eval(states, actions)
    return float(np.mean(q - alpha * logp))


def form_guidance(candidates: CandidateSet, critic_eval: Callable, state: np.ndarray,
                  alpha: float, config: CupConfig, rng: np.random.Generator) -> GuidanceChoice:
    """Score every candidate with independent sample sets and take the argmax.

    Ties go to the agent's own head, so the expected advantage is exactly zero
    whenever no source improves on it.
    """
    heads = candidates.heads()
    values = np.array([
        estimate_soft_value(h, critic_eval, state, alpha,
                            config.n_advantage_samples, rng)
        for h in heads
    ])
    n = candidates.n_sources
    best = values.max()
    chosen = n if values[n] >= best else int(values.argmax())
    if not values[chosen] >= best:
        raise AssertionError("guidance argmax dominance violated")
    return GuidanceChoice(
        chosen_index=chosen,
        chosen_head=heads[chosen],
        expected_advantage=float(values[chosen] - values[n]),
        target_value_estimate=float(values[n]),
    )


def adaptive_weight(choice: GuidanceChoice, config: CupConfig) -> float:
    """beta1 * min(expected advantage, beta2 * |state value estimate|)."""
    return config.beta1 * min(
        choice.expected_advantage,
        config.beta2 * abs(choice.target_value_estimate),
    )


@dataclass
class GuidanceBatchStats:
    """Per-gradient-step guidance bookkeeping over one minibatch.

    ``ea_sums[c]`` accumulates candidate c's estimated advantage over the
    agent head across all states (not only where c was chosen);
    ``beta_sums[c]`` accumulates the applied regularization weight over the
    states where c was chosen.
    """

    counts: np.ndarray
    ea_sums: np.ndarray
    beta_sums: np.ndarray
    n_states: int


def _guidance_critic(agent: SacAgent, config: CupConfig) -> Callable:
    combine = np.maximum if config.advantage_uses_max_of_target_critics else np.minimum

    def critic_eval(states, actions):
        return combine(
            critic_value(agent.target_critics[0], states, actions),
            critic_value(agent.target_critics[1], states, actions),
        )

    return critic_eval


def _form_guidance_batch(agent: SacAgent, batch: Batch, config: CupConfig,
                         rng: np.random.Generator):
    """Vectorized guidance over a minibatch.

    Returns (chosen_mean, chosen_log_std, ea, v_target, chosen_idx, values)
    with values of shape (n_candidates, batch).
    """
    n, b, d = batch.n_sources, batch.size, agent.action_dim
    mean_t, log_std_t, _ = actor_heads(agent, batch.states)
    means = np.concatenate([batch.source_means, mean_t[None]], axis=0)
    log_stds = np.concatenate([batch.source_log_stds, log_std_t[None]], axis=0)

    k = config.n_advantage_samples
    noise = rng.standard_normal((n + 1, k, b, d))
    actions, logp, _ = squashed_sample(means[:, None], log_stds[:, None], noise)
    ds = batch.states.shape[1]
    flat_states = np.broadcast_to(batch.states, (n + 1, k, b, ds)).reshape(-1, ds)
    critic_eval = _guidance_critic(agent, config)
    q = critic_eval(flat_states, actions.reshape(-1, d)).reshape(n + 1, k, b)
    values = (q - agent.alpha * logp).mean(axis=1)  # (n+1, b)

    rows = np.arange(b)
    best = values.max(axis=0)
    chosen = np.where(values[n] >= best, n, values.argmax(axis=0))
    if not np.all(values[chosen, rows] >= best):
        raise AssertionError("guidance argmax dominance violated")
    ea = values[chosen, rows] - values[n]
    return means[chosen, rows], log_stds[chosen, rows], ea, values[n], chosen, values


def _kl_head_term(chosen_mean, chosen_log_std, beta):
    """Additive head-space loss term mean_s beta_s * KL(head_s || chosen_s).

    ``beta`` and the chosen heads are constants; gradients flow only into the
    agent head's mean/log-std.
    """
    inv_var_q = np.exp(-2.0 * chosen_log_std)

    def term(mean, log_std):
        b = mean.shape[0]
        kl = diag_gaussian_kl(mean, log_std, chosen_mean, chosen_log_std)
        loss = float(np.mean(beta * kl))
        w = (beta / b)[:, None]
        g_mean = w * (mean - chosen_mean) * inv_var_q
        g_log_std = w * (np.exp(2.0 * (log_std - chosen_log_std)) - 1.0)
        return loss, g_mean, g_log_std

    return term


def cup_actor_loss(agent: SacAgent, batch: Batch, config: CupConfig,
                   global_step: int, rng: np.random.Generator):
    """Actor objective plus the guidance KL regularizer.

    Returns (loss, actor_grad, stats). With no cached source heads, or before
    the regularization onset step, the loss value and gradient are exactly
    those of the plain actor objective; guidance statistics are still
    collected whenever source heads are present.
    """
    noise = rng.standard_normal((batch.size, agent.action_dim))
    if batch.n_sources == 0:
        loss, grad, info = actor_loss(agent, batch, noise)
        return loss, grad, {"guidance": None, "mean_beta": 0.0, "info": info}

    chosen_mean, chosen_log_std, ea, v_t, chosen, values = _form_guidance_batch(
        agent, batch, config, rng)
    active = global_step >= config.regularization_start_step
    beta = config.beta1 * np.minimum(ea, config.beta2 * np.abs(v_t))
    if not active:
        beta = np.zeros_like(beta)

    if active:
        reg_log_std = np.maximum(chosen_log_std, config.kl_guidance_log_std_floor)
        extra = _kl_head_term(chosen_mean, reg_log_std, beta)
    else:
        extra = None
    loss, grad, info = actor_loss_with_critic(
        agent.actor, batch.states, noise, agent.alpha, agent.action_dim,
        _live_critic_min(agent), extra_head_grad=extra,
    )

    n = batch.n_sources
    counts = np.bincount(chosen, minlength=n + 1).astype(np.float64)
    ea_sums = (values - values[n]).sum(axis=1)
    beta_sums = np.zeros(n + 1)
    np.add.at(beta_sums, chosen, beta)
    stats = {
        "guidance": GuidanceBatchStats(counts, ea_sums, beta_sums, batch.size),
        "mean_beta": float(beta.mean()),
        "info": info,
    }
    return loss, grad, stats


def cup_train_step(agent: SacAgent, buffer: ReplayBuffer, batch_size: int,
                   config: CupConfig, global_step: int,
                   rng: np.random.Generator) -> dict:
    """One training step with the reuse regularizer in the actor update.

    With zero configured sources this is bit-identical to plain SAC: the rng
    draw sequence and every update coincide.
    """
    batch = buffer.sample_batch(batch_size, rng)
    if batch.n_sources == 0:
        return train_on_batch(agent, batch, rng)
    metrics = _update_critics(agent, batch, rng)
    loss_a, grad_a, stats = cup_actor_loss(agent, batch, config, global_step, rng)
    metrics = _finish_step(agent, loss_a, grad_a, stats["info"], metrics)
    metrics["mean_beta"] = stats["mean_beta"]
    metrics["guidance"] = stats["guidance"]
    return metrics


def selection_stats(records: List[GuidanceBatchStats]):
    """Aggregate guidance records into per-candidate selection statistics.

    Returns (fractions, mean_ea, mean_beta) arrays over candidates; fractions
    sum to one. Mean advantage is over all states; mean weight is over the
    states where the candidate was chosen.
    """
    if not records:
        raise ValueError("selection_stats: empty stream")
    counts = np.sum([r.counts for r in records], axis=0)
    ea = np.sum([r.ea_sums for r in records], axis=0)
    beta = np.sum([r.beta_sums for r in records], axis=0)
    total = float(sum(r.n_states for r in records))
    fractions = counts / total
    mean_ea = ea / total
    mean_beta = np.divide(beta, counts, out=np.zeros_like(beta), where=counts > 0)
    return fractions, mean_ea, mean_beta


def write_selection_csv(path, rows) -> None:
    """Selection statistics CSV: one row per (iteration, candidate)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("iteration,candidate_id,fraction_selected,"
                 "mean_expected_advantage,mean_beta_s\n")
        for iteration, fractions, mean_ea, mean_beta in rows:
            for c in range(len(fractions)):
                fh.write(f"{iteration},{c},{float(fractions[c])!r},"
                         f"{float(mean_ea[c])!r},{float(mean_beta[c])!r}\n")
