"""Exact policy evaluation and improvement-bound verification on finite MDPs.

Everything here is computed to numerical exactness: policy evaluation runs
the entropy-regularized Bellman iteration to a 1e-12 residual (a contraction
with modulus gamma), guidance policies are formed by exhaustive state-wise
argmax, and the improvement bounds are checked with all constants computed
from the instance itself.

Unit conventions: entropy terms inside value functions use natural log, as do
the alpha * log pi terms. The KL radius ``delta`` reported for the
KL-to-guidance bounds is measured base-2, which is the base in which the
Pinsker constant sqrt(2 ln 2 * delta) used by those bounds is valid.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from .envs import TabularMDP
from .errors import DimensionError

__all__ = [
    "TabularPolicy",
    "TheoremReport",
    "soft_policy_eval",
    "hard_policy_eval",
    "form_guidance_exact",
    "verify_theorem1",
    "verify_theorem2",
    "soft_policy_iteration",
    "random_softmax_policy",
    "uniform_policy",
    "discounted_occupancy",
    "performance_difference_gap",
    "policy_entropy",
    "policy_kl",
]

_EVAL_RESIDUAL = 1e-13
_MARGIN_TOL = -1e-9


@dataclass
class TabularPolicy:
    """Row-stochastic action probabilities, one row per state."""

    probs: np.ndarray

    def __post_init__(self):
        self.probs = np.asarray(self.probs, dtype=np.float64)
        if self.probs.ndim != 2:
            raise DimensionError("policy table must be 2-D (states x actions)")
        if np.any(self.probs < 0.0):
            raise ValueError("policy probabilities must be non-negative")
        if np.any(np.abs(self.probs.sum(axis=1) - 1.0) > 1e-12):
            raise ValueError("policy rows must sum to 1 within 1e-12")

    @property
    def n_states(self) -> int:
        return self.probs.shape[0]

    @property
    def n_actions(self) -> int:
        return self.probs.shape[1]


@dataclass
class TheoremReport:
    theorem_id: str                # T1_soft | T2_soft | T3_hard | T4_hard
    epsilon: float
    delta: float                   # max-state KL (base-2); nan where unused
    bound_rhs: np.ndarray          # per state, worst instance
    actual_lhs: np.ndarray         # per state, worst instance
    min_margin: float              # min over states (and perturbations) of lhs - rhs
    holds: bool
    infinite_kl: bool = False      # bound vacuous because delta is infinite

    @staticmethod
    def from_margins(theorem_id, epsilon, delta, lhs, rhs, infinite_kl=False):
        margin = float(np.min(lhs - rhs)) if lhs.size else float("inf")
        return TheoremReport(
            theorem_id=theorem_id, epsilon=float(epsilon), delta=float(delta),
            bound_rhs=rhs, actual_lhs=lhs, min_margin=margin,
            holds=bool(margin >= _MARGIN_TOL), infinite_kl=infinite_kl,
        )


def _plogp(p: np.ndarray) -> np.ndarray:
    """p * log p with the 0 log 0 = 0 convention."""
    out = np.zeros_like(p)
    mask = p > 0.0
    out[mask] = p[mask] * np.log(p[mask])
    return out


def policy_entropy(pi: TabularPolicy) -> np.ndarray:
    """Shannon entropy per state, in nats."""
    return -_plogp(pi.probs).sum(axis=1)


def policy_kl(p: TabularPolicy, q: TabularPolicy) -> np.ndarray:
    """KL(p || q) per state, in nats; +inf where q lacks p's support."""
    kl = np.zeros(p.n_states)
    for s in range(p.n_states):
        ps, qs = p.probs[s], q.probs[s]
        mask = ps > 0.0
        if np.any(qs[mask] == 0.0):
            kl[s] = np.inf
        else:
            kl[s] = float(np.sum(ps[mask] * (np.log(ps[mask]) - np.log(qs[mask]))))
    return kl


def uniform_policy(mdp: TabularMDP) -> TabularPolicy:
    return TabularPolicy(np.full((mdp.n_states, mdp.n_actions), 1.0 / mdp.n_actions))


def random_softmax_policy(mdp: TabularMDP, rng: np.random.Generator) -> TabularPolicy:
    """Softmax of standard-normal logits; full support by construction."""
    logits = rng.standard_normal((mdp.n_states, mdp.n_actions))
    z = np.exp(logits - logits.max(axis=1, keepdims=True))
    return TabularPolicy(z / z.sum(axis=1, keepdims=True))


def _v_from_q(pi: TabularPolicy, q: np.ndarray, alpha: float) -> np.ndarray:
    return (pi.probs * q).sum(axis=1) - alpha * _plogp(pi.probs).sum(axis=1)


def soft_policy_eval(mdp: TabularMDP, pi: TabularPolicy, alpha: float,
                     residuals: Optional[list] = None):
    """Entropy-regularized (Q, V) of a policy, iterated to a 1e-13 residual.

    The update is a contraction with modulus gamma; ``residuals`` (if given)
    collects the successive sup-norm changes.
    """
    if alpha < 0.0:
        raise ValueError("alpha must be non-negative")
    q = np.zeros((mdp.n_states, mdp.n_actions))
    while True:
        v = _v_from_q(pi, q, alpha)
        q_next = mdp.reward + mdp.gamma * (mdp.transition @ v)
        residual = np.max(np.abs(q_next - q))
        if residuals is not None:
            residuals.append(float(residual))
        q = q_next
        if residual <= _EVAL_RESIDUAL:
            break
    return q, _v_from_q(pi, q, alpha)


def hard_policy_eval(mdp: TabularMDP, pi: TabularPolicy):
    """Standard (Q, V) without entropy terms; identical to alpha = 0."""
    return soft_policy_eval(mdp, pi, 0.0)


def _candidate_scores(candidates: List[TabularPolicy], q_tilde: np.ndarray,
                      alpha: float) -> np.ndarray:
    """Score matrix (n_candidates, n_states): expected approximate soft value."""
    return np.stack([
        (c.probs * q_tilde).sum(axis=1) - alpha * _plogp(c.probs).sum(axis=1)
        for c in candidates
    ])


def form_guidance_exact(mdp: TabularMDP, sources: List[TabularPolicy],
                        target: TabularPolicy, alpha: float,
                        q_perturbation: np.ndarray) -> TabularPolicy:
    """State-wise argmax over candidate rows under a perturbed target Q.

    Ties go to the target policy. With alpha = 0 this is the hard-value
    variant (scores carry no entropy terms).
    """
    q_t, _ = soft_policy_eval(mdp, target, alpha)
    q_tilde = q_t + np.asarray(q_perturbation, dtype=np.float64)
    candidates = [*sources, target]
    scores = _candidate_scores(candidates, q_tilde, alpha)
    n = len(sources)
    best = scores.max(axis=0)
    chosen = np.where(scores[n] >= best, n, scores.argmax(axis=0))
    rows = np.stack([candidates[c].probs[s] for s, c in enumerate(chosen)])
    return TabularPolicy(rows)


def verify_theorem1(mdp: TabularMDP, sources: List[TabularPolicy],
                    target: TabularPolicy, alpha: float, epsilon: float,
                    n_random_perturbations: int,
                    rng: np.random.Generator) -> TheoremReport:
    """Guidance-improvement bound: V_guidance >= V_target - 2 eps / (1 - gamma).

    Checked state-wise for each random perturbation of the target Q within the
    given sup-norm radius. The report carries the worst perturbation's
    vectors. alpha = 0 verifies the hard-value variant.
    """
    if epsilon < 0.0:
        raise ValueError("epsilon must be non-negative")
    _, v_t = soft_policy_eval(mdp, target, alpha)
    rhs = v_t - 2.0 * epsilon / (1.0 - mdp.gamma)
    worst_lhs, worst_margin = None, np.inf
    for _ in range(max(1, n_random_perturbations)):
        pert = rng.uniform(-epsilon, epsilon, size=mdp.reward.shape)
        guidance = form_guidance_exact(mdp, sources, target, alpha, pert)
        _, v_g = soft_policy_eval(mdp, guidance, alpha)
        margin = float(np.min(v_g - rhs))
        if margin < worst_margin:
            worst_margin, worst_lhs = margin, v_g
    theorem_id = "T1_soft" if alpha > 0.0 else "T3_hard"
    return TheoremReport.from_margins(theorem_id, epsilon, float("nan"),
                                      worst_lhs, rhs)


def verify_theorem2(mdp: TabularMDP, target_t: TabularPolicy,
                    guidance: TabularPolicy, target_t1: TabularPolicy,
                    alpha: float, epsilon: float) -> TheoremReport:
    """KL-bounded improvement of the next target policy.

    delta is computed from the policies themselves as the largest state-wise
    KL(target_t1 || guidance), base-2. The bound

        V_t1 >= V_t - sqrt(2 ln 2 delta) (R_max + alpha H_max') / (1-gamma)^2
                    - (2 eps + alpha H_diff) / (1-gamma)

    uses R_max from the reward tensor, H_max' the largest entropy of
    target_t1, and H_diff the largest absolute entropy change between the two
    target policies. If guidance lacks support somewhere, delta is infinite
    and the (vacuously true) report is flagged. alpha = 0 verifies the
    hard-value variant, whose bound drops the entropy terms.
    """
    kl_nats = policy_kl(target_t1, guidance)
    delta_nats = float(kl_nats.max())
    infinite = not np.isfinite(delta_nats)
    delta_bits = delta_nats / np.log(2.0)

    _, v_t = soft_policy_eval(mdp, target_t, alpha)
    _, v_t1 = soft_policy_eval(mdp, target_t1, alpha)
    h_t1_max = float(policy_entropy(target_t1).max())
    h_diff_max = float(np.abs(policy_entropy(target_t) - policy_entropy(target_t1)).max())

    one_minus = 1.0 - mdp.gamma
    l1_radius = np.sqrt(2.0 * np.log(2.0) * delta_bits) if not infinite else np.inf
    penalty = (l1_radius * (mdp.reward_bound + alpha * h_t1_max) / one_minus**2
               + (2.0 * epsilon + alpha * h_diff_max) / one_minus)
    rhs = v_t - penalty
    theorem_id = "T2_soft" if alpha > 0.0 else "T4_hard"
    return TheoremReport.from_margins(theorem_id, epsilon, delta_bits,
                                      v_t1, rhs, infinite_kl=infinite)


def soft_policy_iteration(mdp: TabularMDP, alpha: float, tol: float) -> TabularPolicy:
    """Alternate exact evaluation and softmax(Q / alpha) improvement."""
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    if alpha <= 0.0:
        raise ValueError("soft policy iteration needs alpha > 0")
    pi = uniform_policy(mdp)
    _, v = soft_policy_eval(mdp, pi, alpha)
    while True:
        q, _ = soft_policy_eval(mdp, pi, alpha)
        logits = q / alpha
        z = np.exp(logits - logits.max(axis=1, keepdims=True))
        pi = TabularPolicy(z / z.sum(axis=1, keepdims=True))
        _, v_next = soft_policy_eval(mdp, pi, alpha)
        if np.max(np.abs(v_next - v)) <= tol:
            return pi
        v = v_next


def discounted_occupancy(mdp: TabularMDP, pi: TabularPolicy) -> np.ndarray:
    """Matrix whose row s is the normalized discounted state occupancy from s.

    Solved exactly: (1 - gamma) (I - gamma P_pi)^-1, with P_pi the state
    transition matrix under the policy. Rows sum to one.
    """
    p_pi = np.einsum("sa,sat->st", pi.probs, mdp.transition)
    eye = np.eye(mdp.n_states)
    return (1.0 - mdp.gamma) * np.linalg.inv(eye - mdp.gamma * p_pi)


def performance_difference_gap(mdp: TabularMDP, pi: TabularPolicy,
                               pi_prime: TabularPolicy, alpha: float) -> float:
    """Max abs violation of the performance-difference identity.

    V_pi'(s) - V_pi(s) must equal the expected one-step advantage of pi' over
    pi (entropy-corrected) under pi''s exact discounted occupancy, scaled by
    1 / (1 - gamma).
    """
    q, v = soft_policy_eval(mdp, pi, alpha)
    _, v_prime = soft_policy_eval(mdp, pi_prime, alpha)
    ea = (pi_prime.probs * q).sum(axis=1) \
        - alpha * _plogp(pi_prime.probs).sum(axis=1) - v
    occupancy = discounted_occupancy(mdp, pi_prime)
    rhs = occupancy @ ea / (1.0 - mdp.gamma)
    return float(np.max(np.abs((v_prime - v) - rhs)))
