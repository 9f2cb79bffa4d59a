"""Run configuration: one flat JSON object, unknown keys rejected."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..baselines import VARIANTS
from ..envs import Env, GroupSpec, SignalLever, TeamReachHet
from ..errors import ConfigError

ENVS = {"signal_lever": SignalLever, "teamreach_het": TeamReachHet}

# per-env replay defaults: (capacity, batch)
REPLAY_DEFAULTS = {"signal_lever": (10_000, 64), "teamreach_het": (50_000, 256)}


@dataclass
class RunConfig:
    env: str = "signal_lever"
    env_params: dict = field(default_factory=dict)
    algo: str = "omdpg"
    label: str | None = None
    groups: list | None = None
    ordering: list | None = None
    order_mode: str = "fixed"
    n_critics: int = 5
    beta: float = 0.5
    lambda_pu: float = 0.1
    tau: float = 0.005
    gamma: float = 0.95
    actor_lr: float = 1e-4
    critic_lr: float = 1e-3
    buffer_size: int | None = None
    batch_size: int | None = None
    explore_sigma: float = 0.1
    target_sigma: float = 0.2
    target_clip: float = 0.5
    temperature_start: float = 1.0
    temperature_end: float = 0.5
    actor_hidden: list = field(default_factory=lambda: [64, 64])
    critic_hidden: list = field(default_factory=lambda: [128, 128])
    total_steps: int = 50_000
    warmup_steps: int = 1_000
    update_every: int = 1
    policy_delay: int = 2
    eval_interval: int = 1_000
    eval_episodes: int = 10
    drift_lr: float = 0.1
    seeds: list = field(default_factory=lambda: [0])
    out_dir: str = "runs"

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.env not in ENVS:
            raise ConfigError(f"unknown env {self.env!r}; choose from {', '.join(ENVS)}")
        if self.algo not in VARIANTS:
            raise ConfigError(f"unknown algo {self.algo!r}; choose from {', '.join(VARIANTS)}")
        if not 0.0 <= self.gamma < 1.0:
            raise ConfigError("gamma must lie in [0, 1)")
        if not 0.0 < self.tau <= 1.0:
            raise ConfigError("tau must lie in (0, 1]")
        for name in ("actor_lr", "critic_lr", "explore_sigma", "target_sigma", "target_clip",
                     "temperature_start", "temperature_end"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"{name} must be positive")
        if self.drift_lr < 0:
            raise ConfigError("drift_lr must be non-negative")
        if self.beta < 0 or self.lambda_pu < 0:
            raise ConfigError("beta and lambda_pu must be non-negative")
        if self.n_critics < 2:
            raise ConfigError("n_critics must be at least 2")
        for name in ("update_every", "policy_delay", "eval_interval", "eval_episodes"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be at least 1")
        if self.total_steps < 0 or self.warmup_steps < 0:
            raise ConfigError("step counts must be non-negative")
        if self.order_mode not in ("fixed", "shuffled"):
            raise ConfigError("order_mode must be 'fixed' or 'shuffled'")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigError("seeds must be distinct")
        if self.buffer_size is not None and self.buffer_size < 1:
            raise ConfigError("buffer_size must be positive")
        if self.batch_size is not None and self.batch_size < 1:
            raise ConfigError("batch_size must be positive")

    @property
    def name(self) -> str:
        return self.label or self.algo

    def replay_sizes(self) -> tuple[int, int]:
        cap, batch = REPLAY_DEFAULTS[self.env]
        return self.buffer_size or cap, self.batch_size or batch

    def make_env(self) -> Env:
        try:
            env = ENVS[self.env](**self.env_params)
        except TypeError as exc:
            raise ConfigError(f"bad env_params for {self.env}: {exc}") from None
        if self.groups is not None or self.ordering is not None:
            assignment = self.groups if self.groups is not None else env.groups.assignment
            if len(assignment) != env.n_agents:
                raise ConfigError(f"groups must list {env.n_agents} agents")
            env.groups = GroupSpec(tuple(assignment), None if self.ordering is None else tuple(self.ordering))
        return env

    def to_dict(self) -> dict:
        return asdict(self)

    def replace(self, **changes) -> "RunConfig":
        data = self.to_dict()
        data.update(changes)
        return RunConfig(**data)


def from_dict(data: dict) -> RunConfig:
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
    try:
        return RunConfig(**data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def load_config(path) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    return from_dict(data)
