"""Experiment orchestration.

One training loop serves both the plain agent and the reuse agent: an empty
source list reduces every code path (and the rng draw sequence) to plain SAC,
so the two are byte-identical under equal seeds. Source policies are queried
exactly once per environment step per source (their heads are cached in the
replay buffer), never at gradient time.

Every run is fully determined by (config, seed): RNG substreams are derived
per role, evaluation uses its own per-checkpoint streams, and metrics files
are flushed at every evaluation point so crashes keep partial data.
"""

from __future__ import annotations

import multiprocessing
import os
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import envs
from .config import ExperimentConfig
from .cup import SourcePolicy, cup_train_step, selection_stats, write_selection_csv
from .envs import TaskSpec, observe, reset, step
from .errors import ConfigError
from .replay import ReplayBuffer, Transition
from .sac import SacAgent, act, save_checkpoint
from .seeding import substream

__all__ = ["MetricsRow", "RunResult", "run_training", "train_source",
           "train_cup", "run_seeds", "run_ablation", "emit_metrics",
           "merge_metrics", "metrics_header", "steps_to_threshold"]


@dataclass
class MetricsRow:
    seed: int
    env_step: int
    mean_eval_return: float
    success_rate: float
    alpha: float
    critic_loss: float
    actor_loss: float
    mean_beta_s: float
    selection_fractions: List[float]  # sources first, own head last


@dataclass
class RunResult:
    seed: int
    rows: List[MetricsRow]
    metrics_path: Path
    checkpoint_path: Path
    selection_path: Optional[Path]
    steps_to_threshold: Optional[int]
    final_success: float
    source_forward_counts: List[int]
    env_steps_run: int


def metrics_header(n_sources: int) -> str:
    cols = ["seed", "env_step", "mean_eval_return", "success_rate", "alpha",
            "critic_loss", "actor_loss", "mean_beta_s"]
    cols += [f"frac_source_{i}" for i in range(n_sources)]
    cols += ["frac_target"]
    return ",".join(cols)


def _fmt(x: float) -> str:
    return repr(float(x))


def _row_line(row: MetricsRow) -> str:
    fields = [str(row.seed), str(row.env_step), _fmt(row.mean_eval_return),
              _fmt(row.success_rate), _fmt(row.alpha), _fmt(row.critic_loss),
              _fmt(row.actor_loss), _fmt(row.mean_beta_s)]
    fields += [_fmt(f) for f in row.selection_fractions]
    return ",".join(fields)


def emit_metrics(rows: List[MetricsRow], path, n_sources: int) -> None:
    """Write a complete metrics CSV (header first, one line per row)."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(metrics_header(n_sources) + "\n")
        for row in rows:
            fh.write(_row_line(row) + "\n")


def merge_metrics(paths: List, out_path) -> int:
    """Concatenate per-seed metrics files (matching headers). Returns row count."""
    header = None
    lines: List[str] = []
    for p in paths:
        text = Path(p).read_text(encoding="utf-8").strip().split("\n")
        if header is None:
            header = text[0]
        elif text[0] != header:
            raise ConfigError(f"metrics header mismatch in {p}")
        lines.extend(text[1:])
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write((header or metrics_header(0)) + "\n")
        for line in lines:
            fh.write(line + "\n")
    return len(lines)


def _evaluate(agent: SacAgent, spec: TaskSpec, episodes: int,
              rng: np.random.Generator) -> tuple:
    """Deterministic-policy evaluation: tanh of the head mean, no sampling."""
    returns, successes = [], 0
    for _ in range(episodes):
        state = reset(spec, rng)
        total, reached = 0.0, False
        done = False
        while not done:
            action = act(agent, observe(state), deterministic=True)
            state, reward, done, success = step(state, action, spec)
            total += reward
            reached = reached or success
        returns.append(total)
        successes += int(reached)
    return float(np.mean(returns)), successes / episodes


def _prepare_out_dir(out_dir) -> Path:
    out = Path(out_dir)
    if out.exists() and not out.is_dir():
        raise ConfigError(f"output path exists and is not a directory: {out}")
    try:
        out.mkdir(parents=True, exist_ok=True)
        probe = out / f".write_probe.{os.getpid()}"
        probe.write_text("")
        probe.unlink(missing_ok=True)
    except OSError as exc:
        raise ConfigError(f"output dir {out} is not writable: {exc}") from exc
    return out


def _load_sources(config: ExperimentConfig) -> List[SourcePolicy]:
    sources = []
    for path in config.source_checkpoints:
        if not Path(path).is_file():
            raise ConfigError(f"source checkpoint not found: {path}")
        src = SourcePolicy.from_checkpoint(path)
        if src.obs_dim != envs.OBS_DIM or src.action_dim != envs.ACTION_DIM:
            raise ConfigError(
                f"source checkpoint {path} has dims ({src.obs_dim}, "
                f"{src.action_dim}); the task needs ({envs.OBS_DIM}, {envs.ACTION_DIM})"
            )
        sources.append(src)
    return sources


def run_training(config: ExperimentConfig, seed: int, out_dir,
                 tag: str = "run") -> RunResult:
    """Train one seed to the configured budget; emit metrics and a checkpoint."""
    out = _prepare_out_dir(out_dir)
    spec = config.task_spec(seed)
    sources = _load_sources(config)
    n_sources = len(sources)
    cup_cfg = config.cup_config()

    agent = SacAgent.fresh(
        envs.OBS_DIM, envs.ACTION_DIM, tuple(config["sac.hidden"]),
        substream(seed, "init"),
        lr=float(config["sac.lr"]), gamma=float(config["sac.gamma"]),
        tau=float(config["sac.tau"]),
        target_entropy=config.target_entropy(envs.ACTION_DIM),
        init_alpha=float(config["sac.init_alpha"]),
        adam_beta1=float(config["sac.adam_beta1"]),
        adam_beta2=float(config["sac.adam_beta2"]),
    )
    buffer = ReplayBuffer(int(config["sac.replay_capacity"]), envs.OBS_DIM,
                          envs.ACTION_DIM, n_sources)
    env_rng = substream(seed, "env")
    train_rng = substream(seed, "train")

    total_steps = int(config["run.total_env_steps"])
    eval_every = int(config["run.eval_every"])
    batch_size = int(config["sac.batch_size"])
    steps_per_train = int(config["sac.env_steps_per_train"])
    exploration = int(config["sac.exploration_steps"])
    reward_scale = float(config["sac.reward_scale"])
    stop_at = float(config["run.stop_at_success"])

    metrics_path = out / f"{tag}_seed{seed}_metrics.csv"
    checkpoint_path = out / f"{tag}_seed{seed}_agent.npz"
    selection_path = out / f"{tag}_seed{seed}_selection.csv" if n_sources else None

    rows: List[MetricsRow] = []
    selection_rows = []
    guidance_records = []
    loss_sums = {"critic": 0.0, "actor": 0.0, "beta": 0.0}
    n_updates = 0
    threshold_step: Optional[int] = None
    final_success = 0.0

    state = reset(spec, env_rng)
    with open(metrics_path, "w", encoding="utf-8", newline="\n") as metrics_file:
        metrics_file.write(metrics_header(n_sources) + "\n")
        env_step = 0
        while env_step < total_steps:
            env_step += 1
            obs = observe(state)
            if env_step <= exploration:
                action = train_rng.uniform(-1.0, 1.0, envs.ACTION_DIM)
            else:
                action = act(agent, obs, train_rng)
            next_state, reward, done, _ = step(state, action, spec)
            heads = [src.head(obs) for src in sources]
            # horizon cutoffs are not true terminals; bootstrap through them
            buffer.push(Transition(obs, action, reward * reward_scale,
                                   observe(next_state), False, heads))
            state = reset(spec, env_rng) if done else next_state

            if env_step % steps_per_train == 0 and len(buffer) >= batch_size:
                metrics = cup_train_step(agent, buffer, batch_size, cup_cfg,
                                         env_step, train_rng)
                loss_sums["critic"] += metrics["critic_loss"]
                loss_sums["actor"] += metrics["actor_loss"]
                loss_sums["beta"] += metrics.get("mean_beta", 0.0)
                if metrics.get("guidance") is not None:
                    guidance_records.append(metrics["guidance"])
                n_updates += 1

            if env_step % eval_every == 0:
                eval_rng = substream(seed, "eval", env_step)
                mean_return, success = _evaluate(
                    agent, spec, int(config["run.eval_episodes"]), eval_rng)
                if guidance_records:
                    fractions, mean_ea, mean_beta = selection_stats(guidance_records)
                    selection_rows.append((env_step, fractions, mean_ea, mean_beta))
                    frac = list(fractions)
                else:
                    frac = [0.0] * n_sources + [1.0]
                denom = max(n_updates, 1)
                row = MetricsRow(
                    seed=seed, env_step=env_step, mean_eval_return=mean_return,
                    success_rate=success, alpha=agent.alpha,
                    critic_loss=loss_sums["critic"] / denom,
                    actor_loss=loss_sums["actor"] / denom,
                    mean_beta_s=loss_sums["beta"] / denom,
                    selection_fractions=frac,
                )
                rows.append(row)
                metrics_file.write(_row_line(row) + "\n")
                metrics_file.flush()
                guidance_records = []
                loss_sums = {"critic": 0.0, "actor": 0.0, "beta": 0.0}
                n_updates = 0
                final_success = success
                if threshold_step is None and stop_at > 0.0 and success >= stop_at:
                    threshold_step = env_step
                    break

    save_checkpoint(agent, checkpoint_path, train_rng)
    if selection_path is not None:
        write_selection_csv(selection_path, selection_rows)
    return RunResult(
        seed=seed, rows=rows, metrics_path=metrics_path,
        checkpoint_path=checkpoint_path, selection_path=selection_path,
        steps_to_threshold=threshold_step if stop_at > 0.0
        else steps_to_threshold(rows, 0.9),
        final_success=final_success,
        source_forward_counts=[s.forward_count for s in sources],
        env_steps_run=env_step,
    )


def steps_to_threshold(rows: List[MetricsRow], threshold: float) -> Optional[int]:
    """First evaluation step whose success rate reaches the threshold."""
    for row in rows:
        if row.success_rate >= threshold:
            return row.env_step
    return None


def train_source(config: ExperimentConfig, seed: int, out_dir,
                 tag: str = "source") -> RunResult:
    """Plain-SAC training: the reuse machinery is inert without sources."""
    if config.source_checkpoints:
        config = config.with_values(**{"run.sources": []})
    return run_training(config, seed, out_dir, tag=tag)


def train_cup(config: ExperimentConfig, seed: int, out_dir,
              tag: str = "cup") -> RunResult:
    """Transfer training with the configured source checkpoints."""
    result = run_training(config, seed, out_dir, tag=tag)
    expected = result.env_steps_run
    for count in result.source_forward_counts:
        if count != expected:
            raise AssertionError(
                f"source queried {count} times over {expected} env steps; "
                "head caching is broken"
            )
    return result


def _seed_worker(args):
    values, seed, out_dir, tag, use_sources = args
    config = ExperimentConfig(dict(values))
    runner = train_cup if use_sources else train_source
    return runner(config, seed, out_dir, tag=tag)


def run_seeds(config: ExperimentConfig, out_dir, tag: str = "run",
              use_sources: bool = True, seeds: Optional[List[int]] = None,
              workers: Optional[int] = None) -> List[RunResult]:
    """Run the configured seeds as independent processes (results by seed order).

    Each worker owns its agent, environment, and buffer; nothing is shared.
    """
    seeds = seeds if seeds is not None else config.seeds
    _prepare_out_dir(out_dir)
    jobs = [(dict(config.values), seed, out_dir, tag, use_sources)
            for seed in seeds]
    workers = workers or min(len(jobs), os.cpu_count() or 1)
    if workers <= 1 or len(jobs) == 1:
        return [_seed_worker(j) for j in jobs]
    ctx = multiprocessing.get_context("fork")
    with ctx.Pool(processes=workers) as pool:
        return pool.map(_seed_worker, jobs)


def run_ablation(config: ExperimentConfig, sweep: List[tuple], out_dir,
                 seeds: Optional[List[int]] = None) -> Path:
    """Run train_cup per (label, overrides) variant per seed; aggregate.

    Returns the path of the aggregate CSV (variant, seed, steps_to_threshold,
    final_success).
    """
    if not sweep:
        raise ConfigError("ablation sweep must be non-empty")
    out = _prepare_out_dir(out_dir)
    seeds = seeds if seeds is not None else config.seeds
    agg_path = out / "ablation.csv"
    with open(agg_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("variant,seed,steps_to_threshold,final_success,env_steps_run\n")
        for label, overrides in sweep:
            variant_cfg = config.with_values(**overrides)
            results = run_seeds(variant_cfg, out / label, tag=label, seeds=seeds)
            for seed, res in zip(seeds, results):
                stt = res.steps_to_threshold
                fh.write(f"{label},{seed},{'' if stt is None else stt},"
                         f"{_fmt(res.final_success)},{res.env_steps_run}\n")
                fh.flush()
    return agg_path
