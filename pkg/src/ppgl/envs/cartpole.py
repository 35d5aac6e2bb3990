"""Continuous-force cart-pole with the classic gym constants."""
from __future__ import annotations

import math

import numpy as np

from .base import Env, StepResult

GRAVITY = 9.8
MASS_CART = 1.0
MASS_POLE = 0.1
TOTAL_MASS = MASS_CART + MASS_POLE
HALF_LENGTH = 0.5
POLEMASS_LENGTH = MASS_POLE * HALF_LENGTH
FORCE_MAG = 10.0
DT = 0.02
THETA_LIMIT = 12 * 2 * math.pi / 360
X_LIMIT = 2.4


class CartPole(Env):
    name = "cartpole"
    obs_dim = 4
    act_dim = 1

    def __init__(self, max_steps: int = 500):
        self.max_steps = max_steps
        self.state = np.zeros(4)
        self.t = 0

    def reset(self, seed: int | None = None) -> np.ndarray:
        rng = np.random.default_rng(seed)
        self.state = rng.uniform(-0.05, 0.05, size=4)
        self.t = 0
        return self.observe()

    def observe(self) -> np.ndarray:
        return self.state.copy()

    def step(self, action) -> StepResult:
        a = float(np.clip(np.asarray(action, dtype=np.float64).reshape(-1)[0], -1.0, 1.0))
        force = FORCE_MAG * a
        x, x_dot, theta, theta_dot = self.state
        cos_t, sin_t = math.cos(theta), math.sin(theta)
        temp = (force + POLEMASS_LENGTH * theta_dot * theta_dot * sin_t) / TOTAL_MASS
        theta_acc = (GRAVITY * sin_t - cos_t * temp) / (
            HALF_LENGTH * (4.0 / 3.0 - MASS_POLE * cos_t * cos_t / TOTAL_MASS)
        )
        x_acc = temp - POLEMASS_LENGTH * theta_acc * cos_t / TOTAL_MASS
        # explicit Euler, same update order as the gym reference
        x = x + DT * x_dot
        x_dot = x_dot + DT * x_acc
        theta = theta + DT * theta_dot
        theta_dot = theta_dot + DT * theta_acc
        self.state = np.array([x, x_dot, theta, theta_dot])
        self.t += 1

        failed = abs(x) > X_LIMIT or abs(theta) > THETA_LIMIT
        done = failed or self.t >= self.max_steps
        reward = 0.0 if failed else 1.0
        info = {
            "dist": abs(theta),
            "force": abs(force),
            "progress": self.t / self.max_steps,
            "bonus": reward,
            "dist_term": 0.0,
            "action_term": 0.0,
            "force_term": 0.0,
        }
        return StepResult(self.observe(), reward, done, info)

    def get_state(self) -> dict[str, np.ndarray]:
        return {"state": self.state.copy(), "t": np.array([float(self.t)])}

    def set_state(self, state: dict[str, np.ndarray]) -> None:
        self.state = np.array(state["state"], dtype=np.float64)
        self.t = int(state["t"][0])
