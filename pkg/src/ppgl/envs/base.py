from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict = field(default_factory=dict)


# Info keys consumed by loggers and the reward-decomposition check.
INFO_KEYS = ("dist", "force", "progress", "bonus", "dist_term", "action_term", "force_term")


def reward_terms_total(info: dict) -> float:
    return info["dist_term"] + info["action_term"] + info["bonus"] + info["force_term"]


class Env:
    """Common step/reset contract.  Subclasses set ``obs_dim``, ``act_dim``, ``max_steps``."""

    name: str = ""
    obs_dim: int
    act_dim: int
    max_steps: int

    def reset(self, seed: int | None = None) -> np.ndarray:
        raise NotImplementedError

    def step(self, action) -> StepResult:
        raise NotImplementedError

    def get_state(self) -> dict[str, np.ndarray]:
        raise NotImplementedError

    def set_state(self, state: dict[str, np.ndarray]) -> None:
        raise NotImplementedError

    def observe(self) -> np.ndarray:
        raise NotImplementedError
