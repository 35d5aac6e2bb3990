"""Advantage estimation, PPO, PPG and Adam."""
from .advantage import compute_gae, gae, normalize_advantages
from .buffer import Minibatch, RolloutBuffer, iterate_minibatches
from .optim import AdamState, adam_step, clip_grad_norm, global_norm
from .ppg import AuxStore, PpgConfig, aux_loss, ppg_auxiliary_phase, ppg_policy_phase
from .ppo import DivergenceError, PpoConfig, ppo_loss, ppo_update, recompute_recurrent_states

__all__ = [
    "AdamState",
    "AuxStore",
    "DivergenceError",
    "Minibatch",
    "PpgConfig",
    "PpoConfig",
    "RolloutBuffer",
    "adam_step",
    "aux_loss",
    "clip_grad_norm",
    "compute_gae",
    "gae",
    "global_norm",
    "iterate_minibatches",
    "normalize_advantages",
    "ppg_auxiliary_phase",
    "ppg_policy_phase",
    "ppo_loss",
    "ppo_update",
    "recompute_recurrent_states",
]
