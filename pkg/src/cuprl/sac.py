"""Soft actor-critic on flat-parameter MLPs.

Twin critics with Polyak-averaged targets, a squashed-Gaussian actor trained
by reparameterization, and a learned entropy temperature held in log space.
All loss gradients are derived by hand and checked against finite differences
in the test suite.

Update order per training step: both critics, actor, temperature, Polyak.
Bellman targets use the minimum of the two *target* critics; the actor loss
uses the minimum of the two live critics and sends no gradient into critic
parameters (only through the action input).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .distributions import LOG_STD_MAX, LOG_STD_MIN, squashed_sample
from .errors import CheckpointError, NumericError
from .replay import Batch, ReplayBuffer
from .seeding import generator_state, restore_generator
from .tensor import AdamState, ParamVector, adam_step, adam_step_array, mlp_backward, mlp_forward, mlp_init

__all__ = [
    "SacAgent",
    "Batch",
    "critic_loss",
    "actor_loss",
    "actor_loss_with_critic",
    "entropy_loss",
    "polyak_update",
    "sac_train_step",
    "act",
    "actor_heads",
    "critic_value",
    "save_checkpoint",
    "load_checkpoint",
    "CHECKPOINT_VERSION",
]

CHECKPOINT_VERSION = 1


def _activations(n_layers: int) -> tuple:
    return ("relu",) * (n_layers - 1) + ("identity",)


@dataclass
class SacAgent:
    obs_dim: int
    action_dim: int
    hidden: tuple
    actor: ParamVector
    critics: list            # [ParamVector, ParamVector]
    target_critics: list
    log_alpha: np.ndarray    # shape (1,); alpha = exp(log_alpha) stays positive
    target_entropy: float
    tau: float
    gamma: float
    opt_actor: AdamState
    opt_critics: list        # [AdamState, AdamState]
    opt_alpha: AdamState

    @classmethod
    def fresh(cls, obs_dim: int, action_dim: int, hidden: tuple,
              rng: np.random.Generator, lr: float = 3e-4, gamma: float = 0.99,
              tau: float = 0.005, target_entropy: Optional[float] = None,
              init_alpha: float = 1.0, adam_beta1: float = 0.9,
              adam_beta2: float = 0.999) -> "SacAgent":
        hidden = tuple(int(h) for h in hidden)
        actor_sizes = (obs_dim, *hidden, 2 * action_dim)
        critic_sizes = (obs_dim + action_dim, *hidden, 1)
        actor = mlp_init(actor_sizes, rng)
        critics = [mlp_init(critic_sizes, rng), mlp_init(critic_sizes, rng)]
        targets = [c.copy() for c in critics]
        if target_entropy is None:
            target_entropy = -float(action_dim)
        mk = lambda n: AdamState.fresh(n, lr, adam_beta1, adam_beta2)
        return cls(
            obs_dim=obs_dim, action_dim=action_dim, hidden=hidden,
            actor=actor, critics=critics, target_critics=targets,
            log_alpha=np.array([np.log(init_alpha)]),
            target_entropy=float(target_entropy), tau=float(tau),
            gamma=float(gamma),
            opt_actor=mk(actor.values.size),
            opt_critics=[mk(critics[0].values.size), mk(critics[1].values.size)],
            opt_alpha=mk(1),
        )

    @property
    def alpha(self) -> float:
        return float(np.exp(self.log_alpha[0]))

    @property
    def acts(self) -> tuple:
        return _activations(len(self.actor.shapes))

    @property
    def critic_acts(self) -> tuple:
        return _activations(len(self.critics[0].shapes))


def actor_heads(agent: SacAgent, states: np.ndarray):
    """Batched policy heads at states.

    Returns (mean, log_std, clamp_mask); the mask kills log-std gradients at
    the clamp boundaries.
    """
    out = mlp_forward(agent.actor, states, agent.acts)
    d = agent.action_dim
    mean = out[..., :d]
    raw = out[..., d:]
    log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
    mask = (raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)
    return mean, log_std, mask


def critic_value(params: ParamVector, states: np.ndarray, actions: np.ndarray) -> np.ndarray:
    x = np.concatenate([states, actions], axis=-1)
    return mlp_forward(params, x, _activations(len(params.shapes)))[..., 0]


def act(agent: SacAgent, obs: np.ndarray, rng: Optional[np.random.Generator] = None,
        deterministic: bool = False) -> np.ndarray:
    mean, log_std, _ = actor_heads(agent, obs[None, :])
    if deterministic:
        return np.tanh(mean[0])
    action, _, _ = squashed_sample(mean[0], log_std[0], rng.standard_normal(agent.action_dim))
    return action


def _check_finite(name: str, value: float) -> float:
    if not np.isfinite(value):
        raise NumericError(f"{name} is non-finite ({value})")
    return float(value)


def critic_loss(agent: SacAgent, batch: Batch, noise: np.ndarray):
    """Squared Bellman error for both critics.

    The target r + gamma * (1 - done) * (min target-critic Q(s', a') -
    alpha log pi(a'|s')) uses a fresh actor sample at s' and is a constant
    with respect to the live critics. Returns
    (loss1 + loss2, (grad1, grad2), info).
    """
    if batch.size == 0:
        raise ValueError("critic_loss: empty batch")
    mean_n, log_std_n, _ = actor_heads(agent, batch.next_states)
    a_next, logp_next, _ = squashed_sample(mean_n, log_std_n, noise)
    qt = np.minimum(
        critic_value(agent.target_critics[0], batch.next_states, a_next),
        critic_value(agent.target_critics[1], batch.next_states, a_next),
    )
    v_next = qt - agent.alpha * logp_next
    y = batch.rewards + agent.gamma * (1.0 - batch.dones) * v_next

    b = batch.size
    sa = np.concatenate([batch.states, batch.actions], axis=-1)
    losses, grads = [], []
    for k in range(2):
        q = mlp_forward(agent.critics[k], sa, agent.critic_acts)[:, 0]
        err = q - y
        losses.append(float(np.mean(err**2)))
        upstream = (2.0 / b) * err[:, None]
        g, _ = mlp_backward(agent.critics[k], sa, upstream, agent.critic_acts)
        grads.append(g)
    loss = _check_finite("critic loss", losses[0] + losses[1])
    info = {"per_critic": tuple(losses), "target": y}
    return loss, tuple(grads), info


def actor_loss_with_critic(
    actor: ParamVector,
    states: np.ndarray,
    noise: np.ndarray,
    alpha: float,
    action_dim: int,
    critic_fn: Callable[[np.ndarray, np.ndarray], tuple],
    extra_head_grad: Optional[Callable] = None,
):
    """Reparameterized actor objective E[alpha log pi(a|s) - Q(s, a)].

    ``critic_fn(states, actions) -> (q, dq_da)`` supplies the critic value and
    its action gradient; no gradient reaches critic parameters through here.
    ``extra_head_grad(mean, log_std)``, when given, returns an additive loss
    term and its gradients on the head outputs (used for the reuse
    regularizer). Returns (loss, actor_grad, info).
    """
    acts = _activations(len(actor.shapes))
    out = mlp_forward(actor, states, acts)
    mean = out[..., :action_dim]
    raw = out[..., action_dim:]
    log_std = np.clip(raw, LOG_STD_MIN, LOG_STD_MAX)
    clamp_mask = (raw > LOG_STD_MIN) & (raw < LOG_STD_MAX)

    action, logp, _ = squashed_sample(mean, log_std, noise)
    q, dq_da = critic_fn(states, action)
    b = states.shape[0]
    loss = float(np.mean(alpha * logp - q))

    std_noise = np.exp(log_std) * noise
    # d logp / d mean = 2a; d logp / d log_std = -1 + 2a * std * noise
    # d action / d mean = 1 - a^2; d action / d log_std = (1 - a^2) * std * noise
    da = 1.0 - action**2
    dl_da = -dq_da / b
    g_mean = (alpha / b) * (2.0 * action) + dl_da * da
    g_log_std = (alpha / b) * (-1.0 + 2.0 * action * std_noise) + dl_da * da * std_noise

    info = {"log_prob": logp, "mean": mean, "log_std": log_std}
    if extra_head_grad is not None:
        extra_loss, extra_g_mean, extra_g_log_std = extra_head_grad(mean, log_std)
        loss += float(extra_loss)
        g_mean = g_mean + extra_g_mean
        g_log_std = g_log_std + extra_g_log_std

    upstream = np.concatenate([g_mean, g_log_std * clamp_mask], axis=-1)
    grad, _ = mlp_backward(actor, states, upstream, acts)
    _check_finite("actor loss", loss)
    return loss, grad, info


def _live_critic_min(agent: SacAgent):
    def critic_fn(states, actions):
        sa = np.concatenate([states, actions], axis=-1)
        q0 = mlp_forward(agent.critics[0], sa, agent.critic_acts)[:, 0]
        q1 = mlp_forward(agent.critics[1], sa, agent.critic_acts)[:, 0]
        pick0 = q0 <= q1
        q = np.where(pick0, q0, q1)
        dq_da = np.zeros_like(actions)
        for k, rows in ((0, pick0), (1, ~pick0)):
            if not rows.any():
                continue
            upstream = rows.astype(np.float64)[:, None]
            _, din = mlp_backward(agent.critics[k], sa, upstream, agent.critic_acts)
            dq_da[rows] = din[rows, states.shape[-1]:]
        return q, dq_da

    return critic_fn


def actor_loss(agent: SacAgent, batch: Batch, noise: np.ndarray):
    """Plain actor objective against the min of the two live critics."""
    if batch.size == 0:
        raise ValueError("actor_loss: empty batch")
    return actor_loss_with_critic(
        agent.actor, batch.states, noise, agent.alpha, agent.action_dim,
        _live_critic_min(agent),
    )


def entropy_loss(agent: SacAgent, batch: Batch, noise: np.ndarray):
    """Temperature objective E[-alpha log pi - alpha target_entropy].

    Log-probs are constants here; the gradient is taken with respect to
    log_alpha through the explicit alpha factors only. Returns
    (loss, dloss_dlog_alpha, info).
    """
    if batch.size == 0:
        raise ValueError("entropy_loss: empty batch")
    mean, log_std, _ = actor_heads(agent, batch.states)
    _, logp, _ = squashed_sample(mean, log_std, noise)
    return _entropy_loss_from_logp(agent, logp)


def _entropy_loss_from_logp(agent: SacAgent, logp: np.ndarray):
    mean_logp = float(np.mean(logp))
    alpha = agent.alpha
    loss = -alpha * (mean_logp + agent.target_entropy)
    grad = alpha * -(mean_logp + agent.target_entropy)  # d loss / d log_alpha
    _check_finite("entropy loss", loss)
    return loss, grad, {"mean_log_prob": mean_logp}


def polyak_update(agent: SacAgent) -> None:
    """targets <- tau * live + (1 - tau) * targets, elementwise."""
    if not (0.0 < agent.tau <= 1.0):
        raise ValueError("tau must be in (0, 1]")
    for live, tgt in zip(agent.critics, agent.target_critics):
        tgt.values *= 1.0 - agent.tau
        tgt.values += agent.tau * live.values


def _update_critics(agent: SacAgent, batch: Batch, rng: np.random.Generator) -> dict:
    noise = rng.standard_normal((batch.size, agent.action_dim))
    loss, grads, info = critic_loss(agent, batch, noise)
    for k in range(2):
        adam_step(agent.opt_critics[k], agent.critics[k], grads[k])
    return {"critic_loss": 0.5 * loss, "per_critic": info["per_critic"]}


def _finish_step(agent: SacAgent, loss_a: float, grad_a: ParamVector,
                 info_a: dict, metrics: dict) -> dict:
    adam_step(agent.opt_actor, agent.actor, grad_a)
    loss_e, grad_e, info_e = _entropy_loss_from_logp(agent, info_a["log_prob"])
    adam_step_array(agent.opt_alpha, agent.log_alpha, np.array([grad_e]))
    polyak_update(agent)
    metrics.update(
        actor_loss=loss_a,
        entropy_loss=loss_e,
        alpha=agent.alpha,
        mean_log_prob=info_e["mean_log_prob"],
    )
    return metrics


def sac_train_step(agent: SacAgent, buffer: ReplayBuffer, batch_size: int,
                   rng: np.random.Generator) -> dict:
    """One gradient step: critics, actor, temperature, Polyak. Returns metrics."""
    batch = buffer.sample_batch(batch_size, rng)
    return train_on_batch(agent, batch, rng)


def train_on_batch(agent: SacAgent, batch: Batch, rng: np.random.Generator) -> dict:
    """Plain-SAC update on an already-sampled batch."""
    metrics = _update_critics(agent, batch, rng)
    noise = rng.standard_normal((batch.size, agent.action_dim))
    loss_a, grad_a, info_a = actor_loss(agent, batch, noise)
    return _finish_step(agent, loss_a, grad_a, info_a, metrics)


# --- checkpointing -----------------------------------------------------------

def save_checkpoint(agent: SacAgent, path, rng: Optional[np.random.Generator] = None) -> None:
    """Versioned binary dump of the agent (and optionally its training stream)."""
    meta = {
        "version": CHECKPOINT_VERSION,
        "obs_dim": agent.obs_dim,
        "action_dim": agent.action_dim,
        "hidden": list(agent.hidden),
        "opt_t": [agent.opt_actor.t, agent.opt_critics[0].t,
                  agent.opt_critics[1].t, agent.opt_alpha.t],
        "rng": generator_state(rng) if rng is not None else None,
    }
    opts = {
        "actor": agent.opt_actor,
        "c0": agent.opt_critics[0],
        "c1": agent.opt_critics[1],
        "alpha": agent.opt_alpha,
    }
    arrays = {
        "meta": np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
        "scalars": np.array([agent.log_alpha[0], agent.target_entropy,
                             agent.tau, agent.gamma]),
        "actor": agent.actor.values,
        "critic0": agent.critics[0].values,
        "critic1": agent.critics[1].values,
        "target0": agent.target_critics[0].values,
        "target1": agent.target_critics[1].values,
    }
    for name, opt in opts.items():
        arrays[f"opt_{name}_m"] = opt.m
        arrays[f"opt_{name}_v"] = opt.v
        arrays[f"opt_{name}_hyper"] = np.array([opt.lr, opt.beta1, opt.beta2, opt.eps])
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`. Returns (agent, rng-or-None)."""
    try:
        data = np.load(path)
    except Exception as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if "meta" not in data:
        raise CheckpointError(f"{path} is not an agent checkpoint")
    meta = json.loads(bytes(data["meta"]).decode("utf-8"))
    if meta.get("version") != CHECKPOINT_VERSION:
        raise CheckpointError(
            f"unknown checkpoint version {meta.get('version')!r} in {path}"
        )
    obs_dim, action_dim = meta["obs_dim"], meta["action_dim"]
    hidden = tuple(meta["hidden"])
    actor_shapes = _mlp_shapes((obs_dim, *hidden, 2 * action_dim))
    critic_shapes = _mlp_shapes((obs_dim + action_dim, *hidden, 1))

    def opt(name, t):
        hyper = data[f"opt_{name}_hyper"]
        return AdamState(m=data[f"opt_{name}_m"].copy(), v=data[f"opt_{name}_v"].copy(),
                         t=int(t), lr=float(hyper[0]), beta1=float(hyper[1]),
                         beta2=float(hyper[2]), eps=float(hyper[3]))

    scalars = data["scalars"]
    ts = meta["opt_t"]
    agent = SacAgent(
        obs_dim=obs_dim, action_dim=action_dim, hidden=hidden,
        actor=ParamVector(data["actor"].copy(), actor_shapes),
        critics=[ParamVector(data["critic0"].copy(), critic_shapes),
                 ParamVector(data["critic1"].copy(), critic_shapes)],
        target_critics=[ParamVector(data["target0"].copy(), critic_shapes),
                        ParamVector(data["target1"].copy(), critic_shapes)],
        log_alpha=np.array([scalars[0]]),
        target_entropy=float(scalars[1]), tau=float(scalars[2]),
        gamma=float(scalars[3]),
        opt_actor=opt("actor", ts[0]),
        opt_critics=[opt("c0", ts[1]), opt("c1", ts[2])],
        opt_alpha=opt("alpha", ts[3]),
    )
    rng = restore_generator(meta["rng"]) if meta.get("rng") else None
    return agent, rng


def _mlp_shapes(sizes) -> tuple:
    return tuple((sizes[k + 1], sizes[k]) for k in range(len(sizes) - 1))
