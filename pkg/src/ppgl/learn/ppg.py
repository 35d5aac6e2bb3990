"""Phasic policy gradient: PPO policy phases plus a value-distillation auxiliary phase."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nets import gaussian_kl
from ..tensor import Tensor
from .buffer import Minibatch, RolloutBuffer, sequence_minibatch
from .optim import AdamState
from .ppo import DivergenceError, PpoConfig, gradient_step, ppo_update, restore, snapshot


@dataclass
class PpgConfig(PpoConfig):
    n_pi: int = 32
    aux_epochs: int = 6
    beta_clone: float = 1.0
    aux_minibatch_size: int = 256

    def validate(self) -> None:
        super().validate()
        if self.n_pi < 1:
            raise ValueError(f"n_pi must be >= 1, got {self.n_pi}")
        if self.aux_epochs < 0 or self.beta_clone < 0 or self.aux_minibatch_size <= 0:
            raise ValueError("aux_epochs, beta_clone must be >= 0 and aux_minibatch_size > 0")


class AuxStore:
    """Replay of policy-phase data for the next auxiliary phase.

    Each entry keeps one buffer's observations, returns and episode starts in
    ``[T, E]`` layout, the recurrent states entering the stream (recurrent
    policies only) and the action-distribution parameters at staging time.
    """

    def __init__(self):
        self.entries: list[dict[str, np.ndarray]] = []

    def __len__(self) -> int:
        return sum(e["returns"].size for e in self.entries)

    def clear(self) -> None:
        self.entries.clear()

    def add(self, buffer: RolloutBuffer, policy) -> None:
        entry = {
            "obs": buffer.obs.copy(),
            "returns": buffer.returns.copy(),
            "starts": buffer.starts.copy(),
        }
        if buffer.recurrent:
            entry["h"] = buffer.h.copy()
            entry["c"] = buffer.c.copy()
        self.entries.append(entry)
        self._snapshot_entry(entry, policy)

    def _snapshot_entry(self, entry: dict, policy) -> None:
        T, E = entry["returns"].shape
        if policy.recurrent:
            fields = {"obs": entry["obs"], "starts": entry["starts"]}
            seqs = [(0, e) for e in range(E)]
            mb = Minibatch(
                actions=None, old_log_probs=None, advantages=None, returns=entry["returns"].T.reshape(-1),
                **sequence_minibatch(fields, seqs, T, entry["h"], entry["c"]),
            )
            dist = policy.distribution(mb)
            # sequence_minibatch is time-major over streams, i.e. the [T, E] order
            entry["old_mean"] = dist.mean.data.reshape(T, E, -1)
        else:
            mb = Minibatch(entry["obs"].reshape(T * E, -1), None, None, None, entry["returns"].reshape(-1))
            entry["old_mean"] = policy.distribution(mb).mean.data.reshape(T, E, -1)
        entry["old_log_std"] = np.array(policy.distribution_log_std())

    def snapshot_policy(self, policy) -> None:
        for entry in self.entries:
            self._snapshot_entry(entry, policy)

    def minibatches(self, recurrent: bool, minibatch_size: int, rng: np.random.Generator):
        if not self.entries:
            return
        if not recurrent:
            obs = np.concatenate([e["obs"].reshape(-1, e["obs"].shape[-1]) for e in self.entries])
            ret = np.concatenate([e["returns"].reshape(-1) for e in self.entries])
            mean = np.concatenate([e["old_mean"].reshape(-1, e["old_mean"].shape[-1]) for e in self.entries])
            ls = self.entries[0]["old_log_std"]
            perm = rng.permutation(len(ret))
            for lo in range(0, len(ret), minibatch_size):
                idx = perm[lo : lo + minibatch_size]
                yield Minibatch(obs[idx], None, None, None, ret[idx], old_mean=mean[idx], old_log_std=ls)
            return
        T = self.entries[0]["returns"].shape[0]
        seqs = [(i, e) for i, entry in enumerate(self.entries) for e in range(entry["returns"].shape[1])]
        order = rng.permutation(len(seqs))
        per_mb = max(1, minibatch_size // T)
        for lo in range(0, len(seqs), per_mb):
            chosen = [seqs[j] for j in order[lo : lo + per_mb]]
            yield self._sequence_batch(chosen, T)

    def _sequence_batch(self, chosen: list[tuple[int, int]], T: int) -> Minibatch:
        obs = np.stack([self.entries[i]["obs"][:, e] for i, e in chosen], axis=1)
        starts = np.stack([self.entries[i]["starts"][:, e] for i, e in chosen], axis=1)
        ret = np.stack([self.entries[i]["returns"][:, e] for i, e in chosen], axis=1).reshape(-1)
        mean = np.stack([self.entries[i]["old_mean"][:, e] for i, e in chosen], axis=1)
        h0 = np.stack([self.entries[i]["h"][0, e] for i, e in chosen])
        c0 = np.stack([self.entries[i]["c"][0, e] for i, e in chosen])
        return Minibatch(
            obs, None, None, None, ret, starts=starts, h0=h0, c0=c0,
            old_mean=mean.reshape(-1, mean.shape[-1]), old_log_std=self.entries[chosen[0][0]]["old_log_std"],
        )


def ppg_policy_phase(
    policy,
    buffer: RolloutBuffer,
    config: PpgConfig,
    adam: AdamState,
    aux_store: AuxStore,
    rng: np.random.Generator,
    stale_hidden: bool = False,
) -> dict:
    """A PPO update, after which the buffer is staged for the auxiliary phase."""
    metrics = ppo_update(policy, buffer, config, adam, rng, stale_hidden=stale_hidden)
    aux_store.add(buffer, policy)
    return metrics


def aux_loss(policy, batch: Minibatch, beta_clone: float) -> tuple[Tensor, dict]:
    dist = policy.distribution(batch)
    value_loss = (dist.value - Tensor._wrap(batch.returns)).square().mean()
    kl = gaussian_kl(
        Tensor._wrap(batch.old_mean), Tensor._wrap(batch.old_log_std), dist.mean, dist.log_std
    ).mean()
    if not np.isfinite(kl.data):
        raise DivergenceError("non-finite KL in auxiliary phase")
    loss = value_loss + kl * beta_clone
    if not np.isfinite(loss.data):
        raise DivergenceError("non-finite auxiliary loss")
    return loss, {"aux_value_loss": float(value_loss.data), "aux_kl": float(kl.data), "aux_loss": float(loss.data)}


def ppg_auxiliary_phase(
    policy,
    aux_store: AuxStore,
    config: PpgConfig,
    adam: AdamState,
    rng: np.random.Generator,
) -> dict:
    """Distil returns into the value head through the shared torso under a KL leash.

    The old action distribution is re-snapshotted from the current parameters
    before the first epoch.  The store is emptied afterwards.
    """
    if not aux_store.entries:
        raise ValueError("auxiliary phase needs a non-empty store")
    if config.aux_epochs == 0:
        aux_store.clear()
        return {}
    aux_store.snapshot_policy(policy)
    snap = snapshot(policy, adam)
    rows = []
    try:
        for _ in range(config.aux_epochs):
            for batch in aux_store.minibatches(policy.recurrent, config.aux_minibatch_size, rng):
                diag, norm = gradient_step(
                    policy, lambda: aux_loss(policy, batch, config.beta_clone), adam, config.lr, config.max_grad_norm
                )
                rows.append(diag)
    except DivergenceError:
        restore(policy, adam, snap)
        aux_store.clear()
        raise
    aux_store.clear()
    return {k: float(np.mean([r[k] for r in rows])) for k in rows[0]}
