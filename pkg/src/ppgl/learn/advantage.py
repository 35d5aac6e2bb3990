from __future__ import annotations

import logging

import numpy as np

from .buffer import RolloutBuffer

logger = logging.getLogger(__name__)


def gae(rewards, values, dones, last_value, gamma: float, lam: float) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimates for time-major arrays.

    Works on ``[T]`` or ``[T, E]`` inputs; ``last_value`` is the bootstrap
    value of the state after the final step (ignored where that step is done).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=bool)
    if rewards.shape[0] == 0:
        raise ValueError("cannot compute advantages of an empty buffer")
    not_done = 1.0 - dones.astype(np.float64)
    adv = np.zeros_like(rewards)
    next_value = np.broadcast_to(np.asarray(last_value, dtype=np.float64), rewards.shape[1:])
    running = np.zeros(rewards.shape[1:])
    for t in range(rewards.shape[0] - 1, -1, -1):
        delta = rewards[t] + gamma * next_value * not_done[t] - values[t]
        running = delta + gamma * lam * not_done[t] * running
        adv[t] = running
        next_value = values[t]
    return adv, adv + values


def compute_gae(buffer: RolloutBuffer, last_value=None, gamma: float = 0.99, lam: float = 0.95) -> RolloutBuffer:
    if len(buffer) == 0:
        raise ValueError("cannot compute advantages of an empty buffer")
    if last_value is None:
        last_value = buffer.last_values
    buffer.advantages, buffer.returns = gae(buffer.rewards, buffer.values, buffer.dones, last_value, gamma, lam)
    return buffer


def normalize_advantages(advantages: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    advantages = np.asarray(advantages, dtype=np.float64)
    if advantages.size < 2:
        logger.warning("advantage normalization skipped for a single element")
        return advantages
    return (advantages - advantages.mean()) / (advantages.std() + eps)
