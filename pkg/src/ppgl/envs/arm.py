"""Planar kinematic arm, contact-force limiting and the reach task."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .base import Env, StepResult

N_JOINTS = 7
LINK_LENGTH = 0.15
MAX_JOINT_DELTA = 0.05
FORCE_CAP = 1.0
CONTACT_TOL = 0.03
ACTION_COEF = 0.01
FORCE_PENALTY_COEF = 0.05
STIFFNESS = 50.0
# targets are drawn no closer than this to the base
R_MIN = 0.25


@dataclass
class ArmModel:
    n_joints: int = N_JOINTS
    link_lengths: np.ndarray = field(default_factory=lambda: np.full(N_JOINTS, LINK_LENGTH))
    joint_angles: np.ndarray = field(default_factory=lambda: np.zeros(N_JOINTS))
    joint_limit: float = math.pi
    max_joint_delta: float = MAX_JOINT_DELTA
    force_cap: float = FORCE_CAP

    @property
    def reach(self) -> float:
        return float(self.link_lengths.sum())

    def min_reach(self) -> float:
        """Smallest distance from the base the effector can get to."""
        return max(0.0, 2.0 * float(self.link_lengths.max()) - self.reach)

    def apply_action(self, action: np.ndarray) -> np.ndarray:
        """Clamp the action to [-1, 1], move joints, clamp to limits; returns the clamped action."""
        a = np.clip(np.asarray(action, dtype=np.float64).reshape(self.n_joints), -1.0, 1.0)
        self.joint_angles = np.clip(
            self.joint_angles + a * self.max_joint_delta, -self.joint_limit, self.joint_limit
        )
        return a


def forward_kinematics(arm: ArmModel) -> np.ndarray:
    """End-effector position of the planar chain rooted at the origin."""
    theta = np.cumsum(arm.joint_angles)
    return np.array([np.dot(arm.link_lengths, np.cos(theta)), np.dot(arm.link_lengths, np.sin(theta))])


def apply_force_limit(f: float, cap: float) -> tuple[float, float]:
    """Return ``(applied force, penalty)`` for a raw contact force ``f``."""
    if f < 0 or cap <= 0:
        raise ValueError(f"need f >= 0 and cap > 0, got f={f}, cap={cap}")
    return min(f, cap), FORCE_PENALTY_COEF * max(0.0, f - cap)


def point_segment_distance(p: np.ndarray, a: np.ndarray, b: np.ndarray) -> float:
    ab = b - a
    denom = float(ab @ ab)
    s = 0.0 if denom == 0.0 else min(1.0, max(0.0, float((p - a) @ ab) / denom))
    return float(np.linalg.norm(p - (a + s * ab)))


class ArmEnv(Env):
    """Shared machinery for every arm task: action clamp, kinematics, reward terms."""

    act_dim = N_JOINTS

    def __init__(self, max_steps: int):
        self.max_steps = max_steps
        self.arm = ArmModel()
        self.t = 0
        self.p = forward_kinematics(self.arm)
        self.p_prev = self.p.copy()
        self.target = np.zeros(2)
        self.force = 0.0

    def _initial_angles(self, rng: np.random.Generator) -> np.ndarray:
        # arm pointing straight up, away from the human on the +x side
        angles = rng.uniform(-0.1, 0.1, size=N_JOINTS)
        angles[0] += math.pi / 2
        return angles

    def _reset_arm(self, rng: np.random.Generator) -> None:
        self.arm = ArmModel(joint_angles=self._initial_angles(rng))
        self.p = forward_kinematics(self.arm)
        self.p_prev = self.p.copy()
        self.t = 0
        self.force = 0.0

    def _move(self, action) -> float:
        a = self.arm.apply_action(action)
        self.p_prev = self.p
        self.p = forward_kinematics(self.arm)
        self.t += 1
        return -ACTION_COEF * float(a @ a)

    def _base_state(self) -> dict[str, np.ndarray]:
        return {
            "angles": self.arm.joint_angles.copy(),
            "p": self.p.copy(),
            "p_prev": self.p_prev.copy(),
            "target": self.target.copy(),
            "scalars": np.array([float(self.t), self.force]),
        }

    def _set_base_state(self, state: dict[str, np.ndarray]) -> None:
        self.arm = ArmModel(joint_angles=np.array(state["angles"], dtype=np.float64))
        self.p = np.array(state["p"], dtype=np.float64)
        self.p_prev = np.array(state["p_prev"], dtype=np.float64)
        self.target = np.array(state["target"], dtype=np.float64)
        self.t = int(state["scalars"][0])
        self.force = float(state["scalars"][1])

    def get_state(self) -> dict[str, np.ndarray]:
        return self._base_state()

    def set_state(self, state: dict[str, np.ndarray]) -> None:
        self._set_base_state(state)


# reach targets lie this far (metres) from the start effector position, so every
# episode asks for a comparable motion and random rollouts score consistently
REACH_BAND = (1.0, 1.2)
REACH_STEPS = 60


class Reach(ArmEnv):
    """Move the effector onto a random point; dense negative-distance reward."""

    name = "reach"
    obs_dim = N_JOINTS + 4

    def __init__(self, max_steps: int = REACH_STEPS):
        super().__init__(max_steps)

    def reset(self, seed: int | None = None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self._reset_arm(rng)
        lo, hi = REACH_BAND
        while True:
            r = rng.uniform(0.3, 0.9)
            phi = rng.uniform(-math.pi / 2, math.pi / 2)
            target = np.array([r * math.cos(phi), r * math.sin(phi)])
            if lo <= np.linalg.norm(target - self.p) <= hi:
                break
        self.target = target
        return self.observe()

    def observe(self) -> np.ndarray:
        return np.concatenate([self.arm.joint_angles, self.p, self.target])

    def step(self, action) -> StepResult:
        action_term = self._move(action)
        dist = float(np.linalg.norm(self.p - self.target))
        reached = dist < CONTACT_TOL
        done = reached or self.t >= self.max_steps
        info = {
            "dist": dist,
            "force": 0.0,
            "progress": 1.0 if reached else 0.0,
            "bonus": 0.0,
            "dist_term": -dist,
            "action_term": action_term,
            "force_term": 0.0,
        }
        return StepResult(self.observe(), -dist + action_term, done, info)
