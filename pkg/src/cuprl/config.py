"""Experiment configuration.

Flat key-value text files with dotted keys (``cup.beta1=30``). Defaults carry
the full published hyper-parameter set; the ``desk`` profile (the default)
overrides the scale-sensitive keys so a run finishes in minutes on one CPU
core. Resolution order: defaults, profile overrides, config file, ``--override``
flags (last wins).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

from .cup import CupConfig
from .envs import TASK_KINDS, TaskSpec, make_task
from .errors import ConfigError

__all__ = ["ExperimentConfig", "DEFAULTS", "PROFILES", "load_config",
           "parse_config_text", "apply_overrides"]

# types: int, float, bool, str, ints (comma list), strs (comma list)
_SCHEMA = {
    "profile": ("str", "desk"),
    "task.kind": ("str", "reach"),
    "task.horizon": ("int", 500),
    "run.total_env_steps": ("int", 200_000),
    "run.eval_every": ("int", 5_000),
    "run.eval_episodes": ("int", 20),
    "run.seeds": ("ints", [0, 1, 2, 3, 4]),
    "run.sources": ("strs", []),
    "run.stop_at_success": ("float", 0.0),  # 0 disables early stop
    "sac.hidden": ("ints", [400, 400, 400]),
    "sac.batch_size": ("int", 1280),
    "sac.lr": ("float", 3e-4),
    "sac.gamma": ("float", 0.99),
    "sac.tau": ("float", 0.005),
    "sac.adam_beta1": ("float", 0.9),
    "sac.adam_beta2": ("float", 0.999),
    "sac.reward_scale": ("float", 1.0),
    "sac.init_alpha": ("float", 1.0),
    "sac.target_entropy": ("str", "auto"),  # "auto" = -action_dim
    "sac.exploration_steps": ("int", 50_000),
    "sac.env_steps_per_train": ("int", 10),
    "sac.replay_capacity": ("int", 100_000),
    "cup.beta1": ("float", 30.0),
    "cup.beta2": ("float", 3e-3),
    "cup.advantage_samples": ("int", 3),
    "cup.regularization_start_step": ("int", 500_000),
    "cup.use_max_target_critics": ("bool", True),
}

DEFAULTS: Dict[str, object] = {k: v for k, (_, v) in _SCHEMA.items()}

PROFILES: Dict[str, Dict[str, object]] = {
    "paper": {},
    "desk": {
        "task.horizon": 200,
        "sac.hidden": [64, 64],
        "sac.batch_size": 128,
        "sac.exploration_steps": 5_000,
        "cup.regularization_start_step": 5_000,
    },
}


def _parse_value(key: str, raw: str):
    if key not in _SCHEMA:
        raise ConfigError(f"unknown config key {key!r}")
    kind = _SCHEMA[key][0]
    raw = raw.strip()
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "bool":
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind == "ints":
            return [int(x) for x in raw.split(",") if x.strip() != ""]
        if kind == "strs":
            return [x.strip() for x in raw.split(",") if x.strip() != ""]
        return raw
    except ValueError as exc:
        raise ConfigError(f"bad value for {key!r}: {raw!r}") from exc


def parse_config_text(text: str) -> Dict[str, object]:
    """Parse ``key=value`` lines; '#' starts a comment; blank lines ignored."""
    out: Dict[str, object] = {}
    for ln, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {ln}: expected key=value, got {line!r}")
        key, raw = line.split("=", 1)
        out[key.strip()] = _parse_value(key.strip(), raw)
    return out


def apply_overrides(entries: Dict[str, object],
                    overrides: List[str]) -> Dict[str, object]:
    """Apply repeatable ``key=value`` CLI overrides on top of parsed entries."""
    out = dict(entries)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override must be key=value, got {item!r}")
        key, raw = item.split("=", 1)
        out[key.strip()] = _parse_value(key.strip(), raw)
    return out


@dataclass
class ExperimentConfig:
    """Validated, fully resolved experiment settings."""

    values: Dict[str, object] = field(default_factory=dict)

    def __post_init__(self):
        merged = dict(DEFAULTS)
        profile = str(self.values.get("profile", merged["profile"]))
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}")
        merged.update(PROFILES[profile])
        merged.update(self.values)
        self.values = merged
        self._validate()

    def _validate(self):
        v = self.values
        if v["task.kind"] not in TASK_KINDS:
            raise ConfigError(f"unknown task kind {v['task.kind']!r}")
        if not v["run.seeds"]:
            raise ConfigError("run.seeds must be non-empty")
        for key in ("run.total_env_steps", "run.eval_every", "run.eval_episodes",
                    "task.horizon", "sac.batch_size", "sac.replay_capacity",
                    "sac.env_steps_per_train", "cup.advantage_samples"):
            if int(v[key]) <= 0:
                raise ConfigError(f"{key} must be positive")
        if not (0.0 < float(v["sac.gamma"]) < 1.0):
            raise ConfigError("sac.gamma must be in (0, 1)")
        if not (0.0 < float(v["sac.tau"]) <= 1.0):
            raise ConfigError("sac.tau must be in (0, 1]")
        te = v["sac.target_entropy"]
        if te != "auto":
            try:
                float(te)
            except ValueError:
                raise ConfigError("sac.target_entropy must be 'auto' or a number")
        # constructing the CupConfig validates the reuse keys
        self.cup_config()

    def __getitem__(self, key: str):
        return self.values[key]

    @property
    def seeds(self) -> List[int]:
        return list(self.values["run.seeds"])

    @property
    def source_checkpoints(self) -> List[str]:
        return list(self.values["run.sources"])

    def task_spec(self, seed: int = 0) -> TaskSpec:
        return make_task(str(self.values["task.kind"]),
                         horizon=int(self.values["task.horizon"]), seed=seed)

    def cup_config(self) -> CupConfig:
        v = self.values
        return CupConfig(
            beta1=float(v["cup.beta1"]),
            beta2=float(v["cup.beta2"]),
            n_advantage_samples=int(v["cup.advantage_samples"]),
            regularization_start_step=int(v["cup.regularization_start_step"]),
            advantage_uses_max_of_target_critics=bool(v["cup.use_max_target_critics"]),
        )

    def target_entropy(self, action_dim: int) -> float:
        te = self.values["sac.target_entropy"]
        return -float(action_dim) if te == "auto" else float(te)

    def with_values(self, **updates) -> "ExperimentConfig":
        """Copy with dotted keys replaced (keys use '.' spelled as given)."""
        merged = dict(self.values)
        merged.update(updates)
        return ExperimentConfig(merged)


def load_config(path: Optional[str], overrides: List[str]) -> ExperimentConfig:
    entries: Dict[str, object] = {}
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file not found: {path}")
        entries = parse_config_text(p.read_text(encoding="utf-8"))
    entries = apply_overrides(entries, overrides)
    return ExperimentConfig(entries)
