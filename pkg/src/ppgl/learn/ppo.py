"""Clipped-surrogate PPO on top of the tape."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from ..nets import gaussian_entropy, gaussian_log_prob
from ..tensor import Tape, Tensor, minimum, zero_grad
from .advantage import normalize_advantages
from .buffer import Minibatch, RolloutBuffer, iterate_minibatches
from .optim import AdamState, adam_step, clip_grad_norm, collect_grads


class DivergenceError(FloatingPointError):
    """A loss or gradient went non-finite; parameters were restored."""


@dataclass
class PpoConfig:
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

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not 0.0 < self.gamma <= 1.0:
            raise ValueError(f"gamma must lie in (0, 1], got {self.gamma}")
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lam must lie in [0, 1], got {self.lam}")
        if not 0.0 < self.clip_eps < 1.0:
            raise ValueError(f"clip_eps must lie in (0, 1), got {self.clip_eps}")
        if self.lr <= 0 or self.minibatch_size <= 0 or self.horizon <= 0:
            raise ValueError("lr, minibatch_size and horizon must be positive")
        if self.epochs < 0 or self.recurrent_chunk < 0:
            raise ValueError("epochs and recurrent_chunk must be non-negative")
        if self.value_coef < 0 or self.entropy_coef < 0 or self.max_grad_norm < 0:
            raise ValueError("loss coefficients and max_grad_norm must be non-negative")

    def as_dict(self) -> dict:
        return asdict(self)


def ppo_loss(policy, batch: Minibatch, config: PpoConfig) -> tuple[Tensor, dict]:
    """Clipped surrogate + value error - entropy bonus, plus diagnostics."""
    dist = policy.distribution(batch)
    logp = gaussian_log_prob(dist.mean, dist.log_std, batch.actions)
    ratio = (logp - Tensor._wrap(batch.old_log_probs)).exp()
    adv = Tensor._wrap(batch.advantages)
    eps = config.clip_eps
    surrogate = minimum(ratio * adv, ratio.clip(1.0 - eps, 1.0 + eps) * adv)
    policy_loss = -surrogate.mean()
    value_loss = (dist.value - Tensor._wrap(batch.returns)).square().mean()
    entropy = gaussian_entropy(dist.log_std)
    loss = policy_loss + value_loss * config.value_coef - entropy * config.entropy_coef
    if not np.isfinite(loss.data).all():
        raise DivergenceError(f"non-finite PPO loss {loss.data}")

    r = ratio.data
    log_r = logp.data - batch.old_log_probs
    diagnostics = {
        "policy_loss": float(policy_loss.data),
        "value_loss": float(value_loss.data),
        "entropy": float(entropy.data),
        "clip_frac": float(np.mean(np.abs(r - 1.0) > eps)),
        "approx_kl": float(np.mean((r - 1.0) - log_r)),
    }
    return loss, diagnostics


def snapshot(policy, adam: AdamState) -> tuple[dict[str, np.ndarray], AdamState]:
    return {k: p.data.copy() for k, p in policy.params.items()}, adam.copy()


def restore(policy, adam: AdamState, snap) -> None:
    params, adam_copy = snap
    for k, p in policy.params.items():
        p.data = params[k].copy()
        p.grad = None
    adam.m, adam.v, adam.t = adam_copy.m, adam_copy.v, adam_copy.t


def gradient_step(policy, loss_fn, adam: AdamState, lr: float, max_grad_norm: float) -> tuple[dict, float]:
    """Zero grads, record ``loss_fn()``, backprop, clip, Adam.  Returns (diagnostics, grad norm)."""
    params = policy.params
    zero_grad(params.values())
    with Tape() as tape:
        loss, diagnostics = loss_fn()
    tape.backward(loss)
    grads = collect_grads(params)
    norm = clip_grad_norm(grads, max_grad_norm)
    if not np.isfinite(norm):
        raise DivergenceError("non-finite gradient norm")
    adam_step(params, grads, adam, lr)
    return diagnostics, norm


def recompute_recurrent_states(policy, buffer: RolloutBuffer) -> RolloutBuffer:
    """Re-unroll the current LSTM over every stream, replacing the stored entering states.

    A stream that begins mid-episode keeps its stored first state (nothing
    earlier is available); every episode that begins inside the buffer is
    unrolled from the zero state.
    """
    if not buffer.recurrent:
        raise ValueError("buffer has no recurrent states")
    h, c = policy.unroll_states(buffer.obs, buffer.h[0], buffer.c[0], buffer.starts)
    buffer.h[...] = h
    buffer.c[...] = c
    return buffer


def _mean_metrics(rows: list[dict]) -> dict:
    if not rows:
        return {}
    return {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}


def ppo_update(
    policy,
    buffer: RolloutBuffer,
    config: PpoConfig,
    adam: AdamState,
    rng: np.random.Generator,
    stale_hidden: bool = False,
) -> dict:
    """``config.epochs`` passes of shuffled minibatches over ``buffer``.

    Recurrent policies get their stored states refreshed at the start of every
    epoch unless ``stale_hidden`` is set.  On a non-finite loss the parameters
    and optimizer state are rolled back and :class:`DivergenceError` is raised.
    """
    if buffer.advantages is None:
        raise ValueError("run compute_gae before ppo_update")
    snap = snapshot(policy, adam)
    rows: list[dict] = []
    try:
        for _ in range(config.epochs):
            if policy.recurrent and not stale_hidden:
                recompute_recurrent_states(policy, buffer)
            for batch in iterate_minibatches(buffer, config.minibatch_size, rng, config.recurrent_chunk):
                batch.advantages = normalize_advantages(batch.advantages)
                diag, norm = gradient_step(
                    policy, lambda: ppo_loss(policy, batch, config), adam, config.lr, config.max_grad_norm
                )
                diag["grad_norm"] = norm
                rows.append(diag)
    except DivergenceError:
        restore(policy, adam, snap)
        raise
    return _mean_metrics(rows)
