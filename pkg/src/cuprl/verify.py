"""Randomized verification campaigns.

Machine checks of the improvement bounds on families of random finite MDPs,
the performance-difference identity, and finite-difference validation of
every training loss. These back the ``verify`` and ``grad-check`` CLI
commands; each campaign returns structured summaries with computed margins.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List

import numpy as np

from .cup import CupConfig, _form_guidance_batch, _kl_head_term
from .envs import make_chain_mdp
from .replay import Batch
from .sac import (
    SacAgent,
    actor_loss,
    actor_loss_with_critic,
    critic_loss,
    entropy_loss,
    _live_critic_min,
)
from .seeding import substream
from .tabular import (
    TabularPolicy,
    form_guidance_exact,
    performance_difference_gap,
    random_softmax_policy,
    verify_theorem1,
    verify_theorem2,
)
from .tensor import grad_check

__all__ = ["CampaignSummary", "guidance_bound_campaign", "kl_bound_campaign",
           "performance_difference_campaign", "gradient_suite", "GradCheckResult"]

MDP_STATES = 6
MDP_ACTIONS = 3
MDP_GAMMA = 0.9
N_SOURCES = 3
SOFT_ALPHA = 0.5


@dataclass
class CampaignSummary:
    name: str
    instances: int
    min_margin: float
    holds: bool

    def line(self) -> str:
        status = "pass" if self.holds else "FAIL"
        return (f"{self.name:<22} instances={self.instances:<6} "
                f"min_margin={self.min_margin:.3e}  {status}")


def _family(n_mdps: int, seed: int, tag: str):
    rng = substream(seed, "verify", tag)
    for _ in range(n_mdps):
        mdp = make_chain_mdp(MDP_STATES, MDP_ACTIONS, MDP_GAMMA, rng)
        sources = [random_softmax_policy(mdp, rng) for _ in range(N_SOURCES)]
        target = random_softmax_policy(mdp, rng)
        yield mdp, sources, target, rng


def guidance_bound_campaign(n_mdps: int = 100,
                            epsilons=(0.0, 0.01, 0.1),
                            n_perturbations: int = 5,
                            alpha: float = SOFT_ALPHA,
                            seed: int = 0) -> CampaignSummary:
    """Improvement bound of the formed guidance under a perturbed critic.

    alpha = 0 runs the hard-value variant.
    """
    name = "T1_soft" if alpha > 0 else "T3_hard"
    min_margin, instances, holds = np.inf, 0, True
    for mdp, sources, target, rng in _family(n_mdps, seed, name):
        for eps in epsilons:
            report = verify_theorem1(mdp, sources, target, alpha, eps,
                                     n_perturbations, rng)
            instances += 1
            min_margin = min(min_margin, report.min_margin)
            holds = holds and report.holds
    return CampaignSummary(name, instances, float(min_margin), holds)


def kl_bound_campaign(n_mdps: int = 100,
                      lambdas=(0.01, 0.1),
                      epsilons=(0.0, 0.01),
                      alpha: float = SOFT_ALPHA,
                      seed: int = 0) -> CampaignSummary:
    """KL-bounded improvement with next policies drawn as guidance-uniform
    mixtures. alpha = 0 runs the hard-value variant."""
    name = "T2_soft" if alpha > 0 else "T4_hard"
    min_margin, instances, holds = np.inf, 0, True
    for mdp, sources, target, rng in _family(n_mdps, seed, name):
        uniform = np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions)
        for eps in epsilons:
            pert = rng.uniform(-eps, eps, mdp.reward.shape)
            guidance = form_guidance_exact(mdp, sources, target, alpha, pert)
            for lam in lambdas:
                t1 = TabularPolicy((1 - lam) * guidance.probs + lam * uniform)
                report = verify_theorem2(mdp, target, guidance, t1, alpha, eps)
                instances += 1
                min_margin = min(min_margin, report.min_margin)
                holds = holds and report.holds
    return CampaignSummary(name, instances, float(min_margin), holds)


def performance_difference_campaign(n_triples: int = 50,
                                    seed: int = 0,
                                    tol: float = 1e-8) -> CampaignSummary:
    """Exact identity between value gaps and occupancy-weighted advantages."""
    rng = substream(seed, "verify", "pdl")
    alphas = (0.0, 0.3, 1.0)
    worst = 0.0
    for i in range(n_triples):
        mdp = make_chain_mdp(MDP_STATES, MDP_ACTIONS, MDP_GAMMA, rng)
        pi = random_softmax_policy(mdp, rng)
        pi_prime = random_softmax_policy(mdp, rng)
        gap = performance_difference_gap(mdp, pi, pi_prime, alphas[i % 3])
        worst = max(worst, gap)
    # margin convention: positive when inside tolerance
    return CampaignSummary("perf_difference", n_triples, tol - worst,
                           worst <= tol)


@dataclass
class GradCheckResult:
    loss_name: str
    batches: int
    max_rel_error: float
    passed: bool

    def line(self) -> str:
        status = "pass" if self.passed else "FAIL"
        return (f"{self.loss_name:<10} batches={self.batches:<4} "
                f"max_rel_error={self.max_rel_error:.3e}  {status}")


def _random_batch(agent: SacAgent, rng: np.random.Generator, size: int,
                  n_sources: int) -> Batch:
    return Batch(
        states=rng.standard_normal((size, agent.obs_dim)),
        actions=np.tanh(rng.standard_normal((size, agent.action_dim))),
        rewards=rng.standard_normal(size),
        next_states=rng.standard_normal((size, agent.obs_dim)),
        dones=(rng.random(size) < 0.2).astype(float),
        source_means=rng.standard_normal((n_sources, size, agent.action_dim)),
        source_log_stds=rng.uniform(-2.0, 0.0, (n_sources, size, agent.action_dim)),
    )


def gradient_suite(n_batches: int = 20, seed: int = 0,
                   tol: float = 1e-4) -> List[GradCheckResult]:
    """Central finite-difference checks of every loss on random small batches."""
    errs = {"critic": 0.0, "actor": 0.0, "entropy": 0.0, "cup": 0.0}
    for i in range(n_batches):
        rng = substream(seed, "gradcheck", i)
        agent = SacAgent.fresh(3, 2, (8, 8), rng)
        batch = _random_batch(agent, rng, 4, 2)
        noise = rng.standard_normal((4, agent.action_dim))

        _, cgrads, _ = critic_loss(agent, batch, noise)
        for k in range(2):
            def c_loss(p, k=k):
                saved = agent.critics[k]
                agent.critics[k] = p
                out = critic_loss(agent, batch, noise)[0]
                agent.critics[k] = saved
                return out

            errs["critic"] = max(errs["critic"],
                                 grad_check(c_loss, agent.critics[k], cgrads[k], 1e-6))

        _, agrad, _ = actor_loss(agent, batch, noise)

        def a_loss(p):
            saved = agent.actor
            agent.actor = p
            out = actor_loss(agent, batch, noise)[0]
            agent.actor = saved
            return out

        errs["actor"] = max(errs["actor"], grad_check(a_loss, agent.actor, agrad, 1e-6))

        _, egrad, _ = entropy_loss(agent, batch, noise)
        h = 1e-6
        la = agent.log_alpha[0]
        agent.log_alpha[0] = la + h
        up = entropy_loss(agent, batch, noise)[0]
        agent.log_alpha[0] = la - h
        down = entropy_loss(agent, batch, noise)[0]
        agent.log_alpha[0] = la
        fd = (up - down) / (2 * h)
        errs["entropy"] = max(errs["entropy"],
                              abs(egrad - fd) / max(1e-8, abs(egrad) + abs(fd)))

        # reuse-regularized loss with the guidance frozen, as used in training
        cfg = CupConfig(regularization_start_step=0, beta1=5.0, beta2=1.0)
        chosen_mean, chosen_log_std, ea, v_t, _, _ = _form_guidance_batch(
            agent, batch, cfg, rng)
        beta = cfg.beta1 * np.minimum(ea, cfg.beta2 * np.abs(v_t))
        extra = _kl_head_term(chosen_mean, chosen_log_std, beta)
        _, ggrad, _ = actor_loss_with_critic(
            agent.actor, batch.states, noise, agent.alpha, agent.action_dim,
            _live_critic_min(agent), extra)

        def g_loss(p):
            return actor_loss_with_critic(
                p, batch.states, noise, agent.alpha, agent.action_dim,
                _live_critic_min(agent), extra)[0]

        errs["cup"] = max(errs["cup"], grad_check(g_loss, agent.actor, ggrad, 1e-6))

    return [GradCheckResult(name, n_batches, err, err <= tol)
            for name, err in errs.items()]
