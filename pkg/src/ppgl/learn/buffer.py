from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class RolloutBuffer:
    """Time-major storage for ``horizon`` steps of ``n_envs`` parallel streams.

    Arrays are shaped ``[T, E, ...]``; flat index ``t * E + e`` interleaves the
    streams.  ``starts[t, e]`` marks the first step of an episode and
    ``h``/``c`` hold the recurrent state entering each step.
    """

    obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    values: np.ndarray
    starts: np.ndarray
    last_values: np.ndarray
    h: np.ndarray | None = None
    c: np.ndarray | None = None
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None
    infos: list = field(default_factory=list, repr=False)

    @classmethod
    def empty(cls, horizon: int, n_envs: int, obs_dim: int, act_dim: int, hidden: int | None = None):
        T, E = horizon, n_envs
        return cls(
            obs=np.zeros((T, E, obs_dim)),
            actions=np.zeros((T, E, act_dim)),
            log_probs=np.zeros((T, E)),
            rewards=np.zeros((T, E)),
            dones=np.zeros((T, E), dtype=bool),
            values=np.zeros((T, E)),
            starts=np.zeros((T, E), dtype=bool),
            last_values=np.zeros(E),
            h=None if hidden is None else np.zeros((T, E, hidden)),
            c=None if hidden is None else np.zeros((T, E, hidden)),
        )

    @property
    def horizon(self) -> int:
        return self.obs.shape[0]

    @property
    def n_envs(self) -> int:
        return self.obs.shape[1]

    def __len__(self) -> int:
        return self.horizon * self.n_envs

    @property
    def recurrent(self) -> bool:
        return self.h is not None

    def flat(self, name: str) -> np.ndarray:
        arr = getattr(self, name)
        if arr is None:
            raise ValueError(f"buffer field {name!r} is not populated")
        return arr.reshape((len(self),) + arr.shape[2:])

    @property
    def episode_starts(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.flat("starts"))]


@dataclass
class Minibatch:
    """Rows for one gradient step.

    ``obs`` is ``[n, D]`` for feed-forward policies and ``[L, S, D]`` for
    recurrent ones (S sequences of L steps, flattened time-major everywhere
    else).
    """

    obs: np.ndarray
    actions: np.ndarray
    old_log_probs: np.ndarray
    advantages: np.ndarray
    returns: np.ndarray
    starts: np.ndarray | None = None
    h0: np.ndarray | None = None
    c0: np.ndarray | None = None
    old_mean: np.ndarray | None = None
    old_log_std: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.returns)


def _seq_rows(arr: np.ndarray, seqs: list[tuple[int, int]], L: int) -> np.ndarray:
    # [L, S, ...] gathered from [T, E, ...]
    return np.stack([arr[k * L : (k + 1) * L, e] for k, e in seqs], axis=1)


def sequence_minibatch(fields: dict[str, np.ndarray], seqs: list[tuple[int, int]], L: int, h, c) -> dict:
    """Gather ``[L, S]`` blocks for the given (chunk, env) pairs; flatten the scalar fields time-major."""
    out = {}
    for name, arr in fields.items():
        block = _seq_rows(arr, seqs, L)
        out[name] = block if name in ("obs", "starts") else block.reshape((-1,) + block.shape[2:])
    out["h0"] = np.stack([h[k * L, e] for k, e in seqs])
    out["c0"] = np.stack([c[k * L, e] for k, e in seqs])
    return out


def iterate_minibatches(
    buffer: RolloutBuffer,
    minibatch_size: int,
    rng: np.random.Generator,
    chunk_len: int = 0,
):
    """Yield shuffled :class:`Minibatch` objects covering the whole buffer once."""
    if buffer.advantages is None or buffer.returns is None:
        raise ValueError("advantages/returns missing; run compute_gae first")
    if not buffer.recurrent:
        n = len(buffer)
        perm = rng.permutation(n)
        obs, act, lp = buffer.flat("obs"), buffer.flat("actions"), buffer.flat("log_probs")
        adv, ret = buffer.flat("advantages"), buffer.flat("returns")
        for lo in range(0, n, minibatch_size):
            idx = perm[lo : lo + minibatch_size]
            yield Minibatch(obs[idx], act[idx], lp[idx], adv[idx], ret[idx])
        return

    T, E = buffer.horizon, buffer.n_envs
    L = chunk_len if chunk_len else T
    if T % L:
        raise ValueError(f"recurrent chunk length {L} must divide the horizon {T}")
    seqs = [(k, e) for k in range(T // L) for e in range(E)]
    order = rng.permutation(len(seqs))
    per_mb = max(1, minibatch_size // L)
    fields = {
        "obs": buffer.obs,
        "actions": buffer.actions,
        "old_log_probs": buffer.log_probs,
        "advantages": buffer.advantages,
        "returns": buffer.returns,
        "starts": buffer.starts,
    }
    for lo in range(0, len(seqs), per_mb):
        chosen = [seqs[i] for i in order[lo : lo + per_mb]]
        yield Minibatch(**sequence_minibatch(fields, chosen, L, buffer.h, buffer.c))
