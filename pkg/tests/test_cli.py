import numpy as np
import pytest

from cuprl.cli import main


def run_cli(args):
    return main(args)


def test_train_source_and_report_end_to_end(tmp_path, capsys):
    out = tmp_path / "runs"
    code = run_cli([
        "train-source", "--out", str(out), "--seed", "0",
        "--override", "run.total_env_steps=2000",
        "--override", "run.eval_every=1000",
        "--override", "run.eval_episodes=2",
        "--override", "sac.exploration_steps=200",
        "--override", "sac.batch_size=32",
        "--override", "task.horizon=50",
    ])
    assert code == 0
    assert (out / "source_seed0_metrics.csv").is_file()
    assert (out / "source_seed0_agent.npz").is_file()
    captured = capsys.readouterr()
    assert "seed 0" in captured.out

    report_out = tmp_path / "report"
    code = run_cli(["report", "--runs", str(out), "--out", str(report_out)])
    assert code == 0
    assert (report_out / "source_aggregate.csv").is_file()
    assert (report_out / "source_curves.png").is_file()


def test_train_cup_uses_sources(tmp_path):
    out = tmp_path / "runs"
    fast = [
        "--override", "run.total_env_steps=2000",
        "--override", "run.eval_every=1000",
        "--override", "run.eval_episodes=2",
        "--override", "sac.exploration_steps=200",
        "--override", "sac.batch_size=32",
        "--override", "task.horizon=50",
        "--override", "cup.regularization_start_step=500",
    ]
    assert run_cli(["train-source", "--out", str(out), "--seed", "1"] + fast) == 0
    src = out / "source_seed1_agent.npz"
    code = run_cli(["train-cup", "--out", str(out), "--seed", "2",
                    "--override", f"run.sources={src}"] + fast)
    assert code == 0
    assert (out / "cup_seed2_metrics.csv").is_file()
    assert (out / "cup_seed2_selection.csv").is_file()


def test_config_error_exit_code(tmp_path):
    assert run_cli(["train-source", "--out", str(tmp_path),
                    "--override", "sac.gamma=2.0"]) == 1
    assert run_cli(["train-cup", "--out", str(tmp_path), "--seed", "0",
                    "--override", "run.sources=/missing.npz",
                    "--override", "run.total_env_steps=100"]) == 1


def test_ablate_requires_sweep(tmp_path):
    code = run_cli(["ablate", "--out", str(tmp_path)])
    assert code == 1  # empty sweep is a config error


def test_ablate_betas_sweep(tmp_path):
    out = tmp_path / "ab"
    code = run_cli([
        "ablate", "--out", str(out), "--betas", "0.09",
        "--override", "run.seeds=0",
        "--override", "run.total_env_steps=1500",
        "--override", "run.eval_every=500",
        "--override", "run.eval_episodes=2",
        "--override", "sac.exploration_steps=200",
        "--override", "sac.batch_size=32",
        "--override", "task.horizon=50",
    ])
    assert code == 0
    text = (out / "ablation.csv").read_text()
    assert text.startswith("variant,seed")
    assert "beta_0.09,0," in text


def test_verify_quick_campaign(capsys, tmp_path):
    code = run_cli(["verify", "--mdps", "5", "--out", str(tmp_path)])
    assert code == 0
    out = capsys.readouterr().out
    assert "T1_soft" in out and "T4_hard" in out and "perf_difference" in out
    report = (tmp_path / "verify_report.csv").read_text()
    assert report.startswith("theorem_id,instances")
    assert "True" in report


def test_grad_check_quick(capsys):
    code = run_cli(["grad-check", "--batches", "2"])
    assert code == 0
    out = capsys.readouterr().out
    for name in ("critic", "actor", "entropy", "cup"):
        assert name in out
