"""Feeding, bed-bathing and itch-scratching analogs around a static stick-figure human.

The human is a set of capsules (segment + radius) in the arm's plane.  Only
the end effector interacts with it: penetration depth into the nearest
capsule gives a spring contact force ``STIFFNESS * depth`` which is passed
through :func:`apply_force_limit`.  Episodes last at most 200 steps
(20 s at 10 steps/s).
"""
from __future__ import annotations

import math

import numpy as np

from .arm import (
    ACTION_COEF,
    CONTACT_TOL,
    FORCE_CAP,
    N_JOINTS,
    STIFFNESS,
    ArmEnv,
    apply_force_limit,
    point_segment_distance,
)
from .base import StepResult

EPISODE_STEPS = 200

FEEDING_BONUS = 10.0
SPILL_SPEED = 0.02
WAYPOINT_BONUS = 2.0
N_WAYPOINTS = 8
SCRATCH_BONUS = 1.0
FORCE_WINDOW = (0.2, 1.0)
HUMAN_JITTER = 0.04

# name -> (start, end, radius), metres, before the per-reset offset
HUMAN_PARTS = {
    "head": ((0.70, 0.45), (0.70, 0.45), 0.08),
    "torso": ((0.85, 0.35), (0.85, -0.25), 0.10),
    "upper_arm": ((0.80, 0.25), (0.62, 0.00), 0.04),
    "forearm": ((0.62, 0.00), (0.35, -0.05), 0.035),
}


def _up_normal(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d = (b - a) / np.linalg.norm(b - a)
    n = np.array([-d[1], d[0]])
    return n if n[1] >= 0 else -n


class AssistiveEnv(ArmEnv):
    obs_dim = N_JOINTS + 8

    def __init__(self, max_steps: int = EPISODE_STEPS, force_cap: float = FORCE_CAP):
        super().__init__(max_steps)
        self.force_cap = force_cap
        self.offset = np.zeros(2)
        self.bonus_total = 0.0

    # -- geometry ---------------------------------------------------------

    def part(self, name: str) -> tuple[np.ndarray, np.ndarray, float]:
        a, b, r = HUMAN_PARTS[name]
        return np.asarray(a) + self.offset, np.asarray(b) + self.offset, r

    def penetration(self, p: np.ndarray) -> float:
        depth = 0.0
        for name in HUMAN_PARTS:
            a, b, r = self.part(name)
            depth = max(depth, r - point_segment_distance(p, a, b))
        return depth

    def contact_force(self, p: np.ndarray) -> float:
        return STIFFNESS * max(0.0, self.penetration(p))

    # -- contract ---------------------------------------------------------

    def reset(self, seed: int | None = None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self._reset_arm(rng)
        self.offset = rng.uniform(-HUMAN_JITTER, HUMAN_JITTER, size=2)
        self.bonus_total = 0.0
        self._reset_task(rng)
        return self.observe()

    def _reset_task(self, rng: np.random.Generator) -> None:
        raise NotImplementedError

    def progress(self) -> float:
        raise NotImplementedError

    def observe(self) -> np.ndarray:
        vel = (self.p - self.p_prev) * 10.0
        return np.concatenate(
            [self.arm.joint_angles, self.p, self.target, vel, [min(self.force, self.force_cap), self.progress()]]
        )

    def step(self, action) -> StepResult:
        action_term = self._move(action)
        f = self.contact_force(self.p)
        self.force, penalty = apply_force_limit(f, self.force_cap)
        bonus, task_done = self._task_update(f)
        self.bonus_total += bonus
        dist = float(np.linalg.norm(self.p - self.target))
        done = task_done or self.t >= self.max_steps
        info = {
            "dist": dist,
            "force": f,
            "progress": self.progress(),
            "bonus": bonus,
            "dist_term": -dist,
            "action_term": action_term,
            "force_term": -penalty,
        }
        reward = -dist + action_term + bonus - penalty
        return StepResult(self.observe(), reward, done, info)

    def _task_update(self, f: float) -> tuple[float, bool]:
        raise NotImplementedError

    def get_state(self) -> dict[str, np.ndarray]:
        state = self._base_state()
        state["offset"] = self.offset.copy()
        state["task"] = np.array([self.bonus_total, *self._task_scalars()])
        return state

    def set_state(self, state: dict[str, np.ndarray]) -> None:
        self._set_base_state(state)
        self.offset = np.array(state["offset"], dtype=np.float64)
        self.bonus_total = float(state["task"][0])
        self._set_task_scalars(state["task"][1:])

    def _task_scalars(self) -> list[float]:
        return []

    def _set_task_scalars(self, values: np.ndarray) -> None:
        pass


class Feeding(AssistiveEnv):
    """Bring the spoon to the mouth slowly; arriving too fast spills."""

    name = "feeding"

    def _reset_task(self, rng):
        center, _, r = self.part("head")
        u = np.array([-1.0, -0.3]) / math.hypot(1.0, 0.3)
        self.target = center + r * u
        self.fed = False

    def progress(self) -> float:
        return 1.0 if getattr(self, "fed", False) else 0.0

    def _task_update(self, f):
        dist = float(np.linalg.norm(self.p - self.target))
        speed = float(np.linalg.norm(self.p - self.p_prev))
        if not self.fed and dist < CONTACT_TOL and speed < SPILL_SPEED:
            self.fed = True
            return FEEDING_BONUS, True
        return 0.0, False

    def _task_scalars(self):
        return [float(self.fed)]

    def _set_task_scalars(self, values):
        self.fed = bool(values[0])


class Bathing(AssistiveEnv):
    """Wipe a row of waypoints along the forearm, in order."""

    name = "bathing"

    def __init__(self, *args, n_waypoints: int = N_WAYPOINTS, **kwargs):
        self.n_waypoints = n_waypoints
        self.waypoints = np.zeros((n_waypoints, 2))
        self.next_wp = 0
        super().__init__(*args, **kwargs)

    def _reset_task(self, rng):
        a, b, r = self.part("forearm")
        n = _up_normal(a, b)
        fractions = (np.arange(self.n_waypoints) + 0.5) / self.n_waypoints
        self.waypoints = a + fractions[:, None] * (b - a) + r * n
        self.next_wp = 0
        self.target = self.waypoints[0].copy()

    def progress(self) -> float:
        return self.next_wp / self.n_waypoints

    def _task_update(self, f):
        if self.next_wp >= self.n_waypoints:
            return 0.0, True
        bonus = 0.0
        if np.linalg.norm(self.p - self.waypoints[self.next_wp]) < CONTACT_TOL:
            bonus = WAYPOINT_BONUS
            self.next_wp += 1
            if self.next_wp < self.n_waypoints:
                self.target = self.waypoints[self.next_wp].copy()
        return bonus, self.next_wp >= self.n_waypoints

    def get_state(self):
        state = super().get_state()
        state["waypoints"] = self.waypoints.copy()
        return state

    def set_state(self, state):
        super().set_state(state)
        self.waypoints = np.array(state["waypoints"], dtype=np.float64)

    def _task_scalars(self):
        return [float(self.next_wp)]

    def _set_task_scalars(self, values):
        self.next_wp = int(values[0])


class Scratching(AssistiveEnv):
    """Hold the effector on an itch with a force inside the comfort window."""

    name = "scratching"

    def _reset_task(self, rng):
        a, b, r = self.part("forearm")
        s = rng.uniform(0.2, 0.8)
        self.target = a + s * (b - a) + r * _up_normal(a, b)
        self.contact_steps = 0

    def progress(self) -> float:
        return getattr(self, "contact_steps", 0) / self.max_steps

    def _task_update(self, f):
        lo, hi = FORCE_WINDOW
        near = np.linalg.norm(self.p - self.target) < CONTACT_TOL
        if near and lo <= f <= hi:
            self.contact_steps += 1
            return SCRATCH_BONUS, False
        return 0.0, False

    def _task_scalars(self):
        return [float(self.contact_steps)]

    def _set_task_scalars(self, values):
        self.contact_steps = int(values[0])


__all__ = ["AssistiveEnv", "Feeding", "Bathing", "Scratching", "ACTION_COEF", "FORCE_WINDOW"]
