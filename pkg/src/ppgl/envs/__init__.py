"""Environment suite.  Names are the CLI contract."""
from .arm import ArmModel, Reach, apply_force_limit, forward_kinematics
from .assistive import Bathing, Feeding, Scratching
from .base import INFO_KEYS, Env, StepResult, reward_terms_total
from .cartpole import CartPole

ENVIRONMENTS = {
    "cartpole": CartPole,
    "reach": Reach,
    "feeding": Feeding,
    "bathing": Bathing,
    "scratching": Scratching,
}
ASSISTIVE = ("feeding", "bathing", "scratching")


def make_env(name: str) -> Env:
    try:
        return ENVIRONMENTS[name]()
    except KeyError:
        raise ValueError(f"unknown env {name!r}; expected one of {sorted(ENVIRONMENTS)}") from None


__all__ = [
    "ArmModel",
    "Bathing",
    "CartPole",
    "Env",
    "ENVIRONMENTS",
    "ASSISTIVE",
    "Feeding",
    "INFO_KEYS",
    "Reach",
    "Scratching",
    "StepResult",
    "apply_force_limit",
    "forward_kinematics",
    "make_env",
    "reward_terms_total",
]
