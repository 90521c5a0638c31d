"""Figures and aggregate tables from emitted metrics.

Reads the per-seed metrics CSVs a run directory accumulates, writes an
aggregate CSV with bootstrapped 95% confidence intervals across seeds, and
renders learning-curve and source-selection figures next to it.
"""

from __future__ import annotations

import csv
import re
from collections import defaultdict
from pathlib import Path
from typing import Dict, List, Optional

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .errors import ConfigError

__all__ = ["read_metrics", "bootstrap_ci", "aggregate_runs", "render_report"]

_METRICS_RE = re.compile(r"^(?P<tag>.+)_seed(?P<seed>\d+)_metrics\.csv$")
_SELECTION_RE = re.compile(r"^(?P<tag>.+)_seed(?P<seed>\d+)_selection\.csv$")


def read_metrics(path) -> Dict[str, np.ndarray]:
    """Metrics CSV as a dict of float columns (seed/env_step as ints)."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    if reader.fieldnames is None:
        raise ConfigError(f"{path} has no header")
    out: Dict[str, np.ndarray] = {}
    for col in reader.fieldnames:
        vals = [row[col] for row in rows]
        if col in ("seed", "env_step"):
            out[col] = np.array([int(v) for v in vals])
        else:
            out[col] = np.array([float(v) for v in vals])
    return out


def bootstrap_ci(values: np.ndarray, n_resamples: int = 2000,
                 seed: int = 0) -> tuple:
    """95% bootstrap CI of the mean across seeds."""
    rng = np.random.default_rng(seed)
    n = len(values)
    if n == 1:
        return float(values[0]), float(values[0])
    means = rng.choice(values, size=(n_resamples, n), replace=True).mean(axis=1)
    return float(np.percentile(means, 2.5)), float(np.percentile(means, 97.5))


def aggregate_runs(paths: List[Path]) -> Dict[str, np.ndarray]:
    """Align per-seed metrics on env_step and aggregate across seeds.

    Seeds stopped early simply drop out of later steps; n_seeds records how
    many contributed at each point.
    """
    per_step: Dict[int, Dict[str, List[float]]] = defaultdict(lambda: defaultdict(list))
    for path in paths:
        cols = read_metrics(path)
        for i, step in enumerate(cols["env_step"]):
            per_step[int(step)]["success_rate"].append(float(cols["success_rate"][i]))
            per_step[int(step)]["mean_eval_return"].append(
                float(cols["mean_eval_return"][i]))
    steps = sorted(per_step)
    agg = {
        "env_step": np.array(steps),
        "n_seeds": np.array([len(per_step[s]["success_rate"]) for s in steps]),
        "mean_success": np.array([np.mean(per_step[s]["success_rate"]) for s in steps]),
        "mean_return": np.array([np.mean(per_step[s]["mean_eval_return"]) for s in steps]),
    }
    lo, hi = [], []
    for s in steps:
        ci = bootstrap_ci(np.array(per_step[s]["success_rate"]))
        lo.append(ci[0])
        hi.append(ci[1])
    agg["success_ci_low"] = np.array(lo)
    agg["success_ci_high"] = np.array(hi)
    return agg


def _write_aggregate_csv(agg: Dict[str, np.ndarray], path: Path) -> None:
    cols = ["env_step", "n_seeds", "mean_return", "mean_success",
            "success_ci_low", "success_ci_high"]
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(cols) + "\n")
        for i in range(len(agg["env_step"])):
            fields = [str(int(agg["env_step"][i])), str(int(agg["n_seeds"][i]))]
            fields += [repr(float(agg[c][i])) for c in cols[2:]]
            fh.write(",".join(fields) + "\n")


def _learning_curve_figure(tag: str, agg: Dict[str, np.ndarray], path: Path) -> None:
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(9, 3.2))
    steps = agg["env_step"]
    ax1.plot(steps, agg["mean_success"], color="tab:blue")
    ax1.fill_between(steps, agg["success_ci_low"], agg["success_ci_high"],
                     color="tab:blue", alpha=0.25, lw=0)
    ax1.set_xlabel("environment steps")
    ax1.set_ylabel("success rate")
    ax1.set_ylim(-0.05, 1.05)
    ax2.plot(steps, agg["mean_return"], color="tab:orange")
    ax2.set_xlabel("environment steps")
    ax2.set_ylabel("mean evaluation return")
    fig.suptitle(tag)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def _selection_figure(tag: str, selection_paths: List[Path], path: Path) -> None:
    # average fractions per candidate across seeds at matching iterations
    per: Dict[int, Dict[int, List[float]]] = defaultdict(lambda: defaultdict(list))
    for p in selection_paths:
        with open(p, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                per[int(row["candidate_id"])][int(row["iteration"])].append(
                    float(row["fraction_selected"]))
    if not per:
        return
    fig, ax = plt.subplots(figsize=(6, 3.2))
    n = max(per) + 1
    for cand in sorted(per):
        iters = sorted(per[cand])
        fracs = [np.mean(per[cand][i]) for i in iters]
        label = "own head" if cand == n - 1 else f"source {cand}"
        ax.plot(iters, fracs, label=label)
    ax.set_xlabel("environment steps")
    ax.set_ylabel("fraction selected")
    ax.set_ylim(-0.05, 1.05)
    ax.legend(fontsize=8)
    fig.suptitle(tag)
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)


def render_report(runs_dir, out_dir) -> List[Path]:
    """Aggregate every run tag found in runs_dir; write CSVs and figures.

    Returns the list of files written.
    """
    runs = Path(runs_dir)
    if not runs.is_dir():
        raise ConfigError(f"runs directory not found: {runs}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    metrics_by_tag: Dict[str, List[Path]] = defaultdict(list)
    selection_by_tag: Dict[str, List[Path]] = defaultdict(list)
    for p in sorted(runs.rglob("*_metrics.csv")):
        m = _METRICS_RE.match(p.name)
        if m:
            metrics_by_tag[m.group("tag")].append(p)
    for p in sorted(runs.rglob("*_selection.csv")):
        m = _SELECTION_RE.match(p.name)
        if m:
            selection_by_tag[m.group("tag")].append(p)
    if not metrics_by_tag:
        raise ConfigError(f"no metrics files under {runs}")

    written: List[Path] = []
    for tag, paths in sorted(metrics_by_tag.items()):
        agg = aggregate_runs(paths)
        csv_path = out / f"{tag}_aggregate.csv"
        _write_aggregate_csv(agg, csv_path)
        fig_path = out / f"{tag}_curves.png"
        _learning_curve_figure(tag, agg, fig_path)
        written += [csv_path, fig_path]
        if tag in selection_by_tag:
            sel_path = out / f"{tag}_selection.png"
            _selection_figure(tag, selection_by_tag[tag], sel_path)
            written.append(sel_path)
    return written
