"""Flat ``key = value`` training configuration.

The file format is deliberately tiny: one assignment per line, ``#`` starts a
comment, strings may be quoted.  Values are typed by key, unknown keys are
rejected.  A file written by :func:`dump_config` is also valid TOML.
"""
from __future__ import annotations

import dataclasses
import hashlib
from dataclasses import dataclass, fields
from pathlib import Path

from .envs import ENVIRONMENTS
from .learn import PpgConfig, PpoConfig

ALGOS = ("ppo", "ppg")
POLICIES = ("mlp", "lstm")


class ConfigError(ValueError):
    pass


@dataclass
class TrainConfig:
    env: str = "cartpole"
    algo: str = "ppo"
    policy: str = "mlp"
    total_timesteps: int = 1_000_000
    seed: int = 0
    n_envs: int = 8
    hidden: int = 64
    # PPO
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    lr: float = 3e-4
    epochs: int = 10
    minibatch_size: int = 64
    value_coef: float = 0.5
    entropy_coef: float = 0.0
    max_grad_norm: float = 0.5
    horizon: int = 256
    recurrent_chunk: int = 0
    # PPG
    n_pi: int = 32
    aux_epochs: int = 6
    beta_clone: float = 1.0
    aux_minibatch_size: int = 256
    # run
    out_dir: str = ""
    checkpoint_every: int = 10
    stale_hidden: bool = False
    eval_episodes: int = 100
    record_wallclock: bool = True

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.env not in ENVIRONMENTS:
            raise ConfigError(f"unknown env {self.env!r}; valid: {', '.join(ENVIRONMENTS)}")
        if self.algo not in ALGOS:
            raise ConfigError(f"unknown algo {self.algo!r}; valid: {', '.join(ALGOS)}")
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown policy {self.policy!r}; valid: {', '.join(POLICIES)}")
        if self.total_timesteps < 0 or self.n_envs < 1 or self.hidden < 1 or self.checkpoint_every < 1:
            raise ConfigError("total_timesteps >= 0, n_envs >= 1, hidden >= 1, checkpoint_every >= 1 required")
        if self.eval_episodes < 0:
            raise ConfigError("eval_episodes must be >= 0")
        try:
            self.learner_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    @property
    def steps_per_update(self) -> int:
        return self.horizon * self.n_envs

    @property
    def n_updates(self) -> int:
        return self.total_timesteps // self.steps_per_update

    def learner_config(self) -> PpoConfig:
        cls = PpgConfig if self.algo == "ppg" else PpoConfig
        names = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in dataclasses.asdict(self).items() if k in names})

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def digest(self) -> bytes:
        """SHA-256 over every field that affects the trajectory."""
        text = dump_config(self.replace(out_dir="", eval_episodes=0, record_wallclock=True))
        return hashlib.sha256(text.encode()).digest()


FIELD_TYPES = {f.name: f.type for f in fields(TrainConfig)}


def _coerce(key: str, raw: str):
    kind = FIELD_TYPES[key]
    raw = raw.strip()
    if kind == "str":
        if len(raw) >= 2 and raw[0] == raw[-1] and raw[0] in "\"'":
            raw = raw[1:-1]
        return raw
    if kind == "bool":
        low = raw.lower()
        if low in ("true", "1", "yes"):
            return True
        if low in ("false", "0", "no"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    try:
        return int(raw.replace("_", "")) if kind == "int" else float(raw)
    except ValueError:
        raise ConfigError(f"{key}: expected {kind}, got {raw!r}") from None


def parse_config_text(text: str) -> dict:
    values = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (s.strip() for s in stripped.split("=", 1))
        if key not in FIELD_TYPES:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if raw.startswith('"'):
            text = _quoted(raw, lineno)
            values[key] = text if FIELD_TYPES[key] == "str" else _coerce(key, text)
        else:
            values[key] = _coerce(key, raw.split("#", 1)[0])
    return values


def _quoted(raw: str, lineno: int) -> str:
    """Double-quoted string with backslash escapes, optionally followed by a comment."""
    out = []
    i = 1
    while i < len(raw):
        ch = raw[i]
        if ch == "\\" and i + 1 < len(raw):
            out.append(raw[i + 1])
            i += 2
            continue
        if ch == '"':
            rest = raw[i + 1 :].strip()
            if rest and not rest.startswith("#"):
                raise ConfigError(f"line {lineno}: unexpected text after string: {rest!r}")
            return "".join(out)
        out.append(ch)
        i += 1
    raise ConfigError(f"line {lineno}: unterminated string")


def load_config_file(path: str | Path) -> dict:
    return parse_config_text(Path(path).read_text())


def coerce_value(key: str, raw: str):
    if key not in FIELD_TYPES:
        raise ConfigError(f"unknown key {key!r}")
    return _coerce(key, raw)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, str):
        return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'
    return repr(value)


def dump_config(config: TrainConfig) -> str:
    return "".join(f"{f.name} = {_format(getattr(config, f.name))}\n" for f in fields(TrainConfig))


def resolve_config(file_values: dict | None = None, overrides: dict | None = None) -> TrainConfig:
    """Defaults < config file < explicit overrides."""
    merged = {}
    merged.update(file_values or {})
    merged.update({k: v for k, v in (overrides or {}).items() if v is not None})
    unknown = set(merged) - set(FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown keys: {', '.join(sorted(unknown))}")
    return TrainConfig(**merged)
