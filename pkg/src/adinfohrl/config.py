"""Experiment configuration: defaults, validation and the flat JSON file format."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path

from .envs import make_env
from .errors import ConfigurationError

MODES = ("adinfohrl", "infohrl", "td3")


@dataclass
class ExperimentConfig:
    env_name: str = "bimodal-bandit"
    env_params: dict = field(default_factory=dict)
    mode: str = "adinfohrl"
    option_count: int = 2
    option_hold: int = 3
    gamma: float = 0.99
    tau: float = 0.005
    actor_lr: float = 0.001
    critic_lr: float = 0.001
    option_lr: float = 0.001
    critic_batch: int = 100
    actor_batch_per_option: int = 100
    option_batch: int = 50
    on_policy_capacity: int = 5000
    option_net_epochs: int = 40
    lambda_mi: float = 0.1
    vat_noise_variance: float = 0.04
    exploration_sigma: float = 0.1
    target_noise_sigma: float = 0.2
    noise_clip: float = 0.5
    policy_delay: int = 2
    hidden_sizes: list = field(default_factory=lambda: [64, 64])
    option_init_spread: float = 0.5
    replay_capacity: int = 1_000_000
    warmup_steps: int = 1000
    total_steps: int = 20_000
    eval_interval: int = 5000
    eval_episodes: int = 10
    seeds: list = field(default_factory=lambda: [0])
    output_dir: str = "runs"

    @property
    def effective_option_count(self) -> int:
        return 1 if self.mode == "td3" else self.option_count

    @property
    def actor_batch_total(self) -> int:
        return self.actor_batch_per_option * self.effective_option_count

    @property
    def warmup_threshold(self) -> int:
        # the actor batch is drawn from replay too, so it sets a floor as well
        return max(self.critic_batch, self.actor_batch_total, self.warmup_steps)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def validate(self) -> "ExperimentConfig":
        def positive(name, integer=False):
            v = getattr(self, name)
            if integer and (not isinstance(v, int) or isinstance(v, bool)):
                raise ConfigurationError(f"{name} must be an integer")
            if not v > 0:
                raise ConfigurationError(f"{name} must be positive")

        if self.mode not in MODES:
            raise ConfigurationError(f"mode must be one of {MODES}")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigurationError("gamma must be in [0,1)")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigurationError("tau must be in (0,1]")
        for name in ("option_count", "option_hold", "critic_batch", "actor_batch_per_option",
                     "option_batch", "on_policy_capacity", "policy_delay", "replay_capacity",
                     "total_steps", "eval_interval", "eval_episodes"):
            positive(name, integer=True)
        for name in ("actor_lr", "critic_lr", "option_lr", "vat_noise_variance", "noise_clip"):
            positive(name)
        if self.mode != "td3" and self.option_count < 2:
            raise ConfigurationError("option_count must be >= 2 unless mode is td3")
        for name in ("option_net_epochs", "warmup_steps"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 0:
                raise ConfigurationError(f"{name} must be a nonnegative integer")
        for name in ("lambda_mi", "exploration_sigma", "target_noise_sigma", "option_init_spread"):
            if getattr(self, name) < 0:
                raise ConfigurationError(f"{name} must be nonnegative")
        if self.option_init_spread >= 1.0:
            raise ConfigurationError("option_init_spread must be below 1")
        if not self.hidden_sizes or any(not isinstance(h, int) or h < 1 for h in self.hidden_sizes):
            raise ConfigurationError("hidden_sizes must be a non-empty list of positive integers")
        if not self.seeds or any(not isinstance(s, int) or s < 0 for s in self.seeds):
            raise ConfigurationError("seeds must be a non-empty list of nonnegative integers")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError("seeds must be distinct")
        if not isinstance(self.env_params, dict):
            raise ConfigurationError("env_params must be a mapping")
        make_env(self.env_name, **self.env_params)
        return self


_FIELDS = {f.name: f for f in dataclasses.fields(ExperimentConfig)}


def _coerce(key, value):
    default = getattr(ExperimentConfig(), key)
    if isinstance(default, bool):
        ok = isinstance(value, bool)
    elif isinstance(default, int):
        ok = isinstance(value, int) and not isinstance(value, bool)
    elif isinstance(default, float):
        ok = isinstance(value, (int, float)) and not isinstance(value, bool)
        value = float(value) if ok else value
    elif isinstance(default, str):
        ok = isinstance(value, str)
    elif isinstance(default, list):
        ok = isinstance(value, list)
    elif isinstance(default, dict):
        ok = isinstance(value, dict)
    else:
        ok = True
    if not ok:
        raise ConfigurationError(
            f"{key}: expected {type(default).__name__}, got {type(value).__name__}")
    return value


def config_from_dict(values: dict) -> ExperimentConfig:
    unknown = sorted(set(values) - set(_FIELDS))
    if unknown:
        raise ConfigurationError(f"unknown config key(s): {', '.join(unknown)}")
    cfg = ExperimentConfig(**{k: _coerce(k, v) for k, v in values.items()})
    if cfg.mode == "td3":
        cfg.option_count = 1
    return cfg.validate()


def parse_override(text: str):
    """``KEY=VALUE`` where VALUE is JSON, falling back to a bare string."""
    if "=" not in text:
        raise ConfigurationError(f"override {text!r} is not KEY=VALUE")
    key, raw = text.split("=", 1)
    key = key.strip()
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    return key, value


def load_config(path=None, overrides=()) -> ExperimentConfig:
    """Read a flat JSON object (missing keys take defaults) and apply overrides.

    ``overrides`` is an iterable of ``KEY=VALUE`` strings or ``(key, value)`` pairs.
    """
    values = {}
    if path is not None:
        text = Path(path).read_text()
        if text.strip():
            try:
                values = json.loads(text)
            except json.JSONDecodeError as exc:
                raise ConfigurationError(f"{path}: not valid JSON ({exc})") from None
            if not isinstance(values, dict):
                raise ConfigurationError(f"{path}: expected a JSON object")
    for item in overrides:
        key, value = parse_override(item) if isinstance(item, str) else item
        values[key] = value
    return config_from_dict(values)


def dump_config(cfg: ExperimentConfig) -> str:
    return json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n"


def save_config(cfg: ExperimentConfig, path):
    Path(path).write_text(dump_config(cfg))
