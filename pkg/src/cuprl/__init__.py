"""Critic-guided policy reuse on a from-scratch soft actor-critic.

Subpackage map:

* :mod:`cuprl.tensor`        -- flat-parameter MLPs, Adam, gradient checking
* :mod:`cuprl.distributions` -- squashed-Gaussian heads
* :mod:`cuprl.envs`          -- point-mass transfer tasks, finite MDPs
* :mod:`cuprl.replay`        -- replay buffer with source-head caching
* :mod:`cuprl.sac`           -- soft actor-critic
* :mod:`cuprl.cup`           -- guidance formation and the reuse regularizer
* :mod:`cuprl.tabular`       -- exact evaluation and improvement-bound checks
* :mod:`cuprl.config`        -- experiment configuration
* :mod:`cuprl.harness`       -- training loops, metrics, ablations
* :mod:`cuprl.report`        -- figures and aggregate tables from metrics
* :mod:`cuprl.cli`           -- command-line entry point
"""

__version__ = "0.1.0"
