import hashlib
from pathlib import Path

import numpy as np
import pytest

from cuprl.config import ExperimentConfig
from cuprl.errors import ConfigError
from cuprl.harness import (
    MetricsRow,
    emit_metrics,
    merge_metrics,
    metrics_header,
    run_ablation,
    run_seeds,
    run_training,
    steps_to_threshold,
    train_cup,
    train_source,
)

FAST = {
    "run.total_env_steps": 4_000,
    "run.eval_every": 1_000,
    "run.eval_episodes": 4,
    "run.seeds": [0],
    "sac.exploration_steps": 500,
    "sac.batch_size": 64,
    "cup.regularization_start_step": 1_000,
    "task.horizon": 100,
}


def fast_config(**extra):
    return ExperimentConfig({**FAST, **extra})


@pytest.fixture(scope="module")
def source_checkpoint(tmp_path_factory):
    out = tmp_path_factory.mktemp("srcs")
    res = train_source(fast_config(), 0, out, tag="src")
    return str(res.checkpoint_path)


def test_run_is_deterministic_byte_for_byte(tmp_path):
    r1 = run_training(fast_config(), 7, tmp_path / "a")
    r2 = run_training(fast_config(), 7, tmp_path / "b")
    assert r1.metrics_path.read_bytes() == r2.metrics_path.read_bytes()
    assert (Path(r1.checkpoint_path).read_bytes()
            == Path(r2.checkpoint_path).read_bytes())


def test_metrics_file_structure(tmp_path):
    res = run_training(fast_config(), 1, tmp_path)
    lines = res.metrics_path.read_text().strip().split("\n")
    assert lines[0] == metrics_header(0)
    assert len(lines) == 1 + 4  # 4 eval points
    first = lines[1].split(",")
    assert first[0] == "1"
    assert first[1] == "1000"
    # plain run: selection fraction column is the own-head column, == 1.0
    assert float(first[-1]) == 1.0


def test_train_source_ignores_configured_sources(tmp_path, source_checkpoint):
    cfg = fast_config(**{"run.sources": [source_checkpoint]})
    res = train_source(cfg, 0, tmp_path)
    assert res.source_forward_counts == []
    assert res.selection_path is None


def test_train_cup_counts_source_queries_once_per_step(tmp_path, source_checkpoint):
    cfg = fast_config(**{"run.sources": [source_checkpoint, source_checkpoint]})
    res = train_cup(cfg, 0, tmp_path)
    assert res.source_forward_counts == [res.env_steps_run, res.env_steps_run]
    assert res.selection_path is not None
    sel = res.selection_path.read_text().strip().split("\n")
    assert sel[0].startswith("iteration,candidate_id")
    # 3 candidates per eval point once updates begin
    assert len(sel) > 3


def test_selection_fractions_sum_to_one(tmp_path, source_checkpoint):
    cfg = fast_config(**{"run.sources": [source_checkpoint]})
    res = train_cup(cfg, 0, tmp_path)
    for row in res.rows:
        assert sum(row.selection_fractions) == pytest.approx(1.0, abs=1e-9)


def test_cup_with_zero_sources_matches_plain_sac_byte_for_byte(tmp_path):
    cfg = fast_config()
    a = train_source(cfg, 3, tmp_path / "sac")
    b = train_cup(cfg, 3, tmp_path / "cup")
    assert a.metrics_path.read_bytes() == b.metrics_path.read_bytes()


def test_sources_never_mutated_by_transfer(tmp_path, source_checkpoint):
    before = hashlib.sha256(Path(source_checkpoint).read_bytes()).hexdigest()
    cfg = fast_config(**{"run.sources": [source_checkpoint]})
    train_cup(cfg, 0, tmp_path)
    after = hashlib.sha256(Path(source_checkpoint).read_bytes()).hexdigest()
    assert before == after


def test_missing_source_checkpoint_refused(tmp_path):
    cfg = fast_config(**{"run.sources": ["/nonexistent/src.npz"]})
    with pytest.raises(ConfigError, match="not found"):
        train_cup(cfg, 0, tmp_path)


def test_corrupt_output_dir_is_structured_error(tmp_path):
    blocker = tmp_path / "blocked"
    blocker.write_text("a file, not a directory")
    with pytest.raises(ConfigError, match="not a directory"):
        run_training(fast_config(), 0, blocker)


def test_early_stop_at_success_threshold(tmp_path, monkeypatch):
    import cuprl.harness as harness

    monkeypatch.setattr(harness, "_evaluate", lambda *a: (0.0, 1.0))
    cfg = fast_config(**{"run.stop_at_success": 0.9})
    res = run_training(cfg, 0, tmp_path)
    assert res.env_steps_run == 1_000
    assert res.steps_to_threshold == 1_000
    # disabled threshold runs the full budget
    res2 = run_training(fast_config(), 0, tmp_path / "full")
    assert res2.env_steps_run == 4_000


def test_steps_to_threshold_helper():
    rows = [MetricsRow(0, s, 0.0, sr, 0.1, 0, 0, 0, [1.0])
            for s, sr in ((1000, 0.2), (2000, 0.9), (3000, 0.95))]
    assert steps_to_threshold(rows, 0.9) == 2000
    assert steps_to_threshold(rows, 0.99) is None


def test_emit_metrics_empty_and_counts(tmp_path):
    path = tmp_path / "m.csv"
    emit_metrics([], path, n_sources=2)
    assert path.read_text() == metrics_header(2) + "\n"
    rows = [MetricsRow(0, 1000, -1.0, 0.5, 0.2, 0.1, -0.2, 0.0, [0.1, 0.2, 0.7]),
            MetricsRow(1, 1000, -1.5, 0.4, 0.2, 0.1, -0.2, 0.0, [0.0, 0.0, 1.0])]
    emit_metrics(rows, path, n_sources=2)
    assert len(path.read_text().strip().split("\n")) == 3


def test_merge_metrics_counts(tmp_path):
    paths = []
    for seed in (0, 1):
        p = tmp_path / f"s{seed}.csv"
        rows = [MetricsRow(seed, s, 0.0, 0.0, 0.1, 0, 0, 0, [1.0])
                for s in (1000, 2000, 3000)]
        emit_metrics(rows, p, n_sources=0)
        paths.append(p)
    merged = tmp_path / "merged.csv"
    assert merge_metrics(paths, merged) == 6
    assert len(merged.read_text().strip().split("\n")) == 7


def test_merge_metrics_rejects_mismatched_headers(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    emit_metrics([], a, n_sources=0)
    emit_metrics([], b, n_sources=1)
    with pytest.raises(ConfigError, match="header mismatch"):
        merge_metrics([a, b], tmp_path / "out.csv")


def test_run_seeds_parallel_matches_serial(tmp_path):
    cfg = fast_config(**{"run.seeds": [0, 1]})
    par = run_seeds(cfg, tmp_path / "par", use_sources=False, workers=2)
    ser = run_seeds(cfg, tmp_path / "ser", use_sources=False, workers=1)
    for a, b in zip(par, ser):
        assert a.metrics_path.read_bytes() == b.metrics_path.read_bytes()


def test_run_ablation_aggregates(tmp_path, source_checkpoint):
    cfg = fast_config(**{"run.sources": [source_checkpoint]})
    sweep = [("lo", {"cup.beta1": 1.0}), ("hi", {"cup.beta1": 30.0})]
    agg = run_ablation(cfg, sweep, tmp_path, seeds=[0])
    lines = agg.read_text().strip().split("\n")
    assert lines[0].startswith("variant,seed")
    assert len(lines) == 3
    assert lines[1].startswith("lo,0,")


def test_run_ablation_rejects_empty_sweep(tmp_path):
    with pytest.raises(ConfigError, match="non-empty"):
        run_ablation(fast_config(), [], tmp_path)
