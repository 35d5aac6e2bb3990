"""Policy/value networks and the diagonal-Gaussian action distribution.

Two architectures share one interface:

* :class:`MlpPolicy` -- tanh MLP with two 64-unit hidden layers, a linear
  action-mean head and a value head on the second hidden layer.
* :class:`LstmPolicy` -- single-layer LSTM whose output feeds a one-hidden-layer
  tanh MLP projecting to the action mean; the value head reads the LSTM output.

Both keep a state-independent ``log_std`` vector.  Parameters live in an
ordered ``dict[str, Tensor]`` so optimizers and checkpoints can treat every
architecture alike.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .tensor import ShapeError, Tensor, concat, lstm_cell, stack

LOG_STD_MIN = -20.0
LOG_STD_MAX = 2.0
HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
HALF_LOG_2PIE = 0.5 * math.log(2.0 * math.pi * math.e)

HIDDEN_GAIN = math.sqrt(2.0)
ACTION_GAIN = 0.01
VALUE_GAIN = 1.0
RECURRENT_GAIN = 1.0

GATES = ("i", "f", "g", "o")


# ---------------------------------------------------------------------------
# initialization


def orthogonal(shape: tuple[int, int], gain: float, rng: np.random.Generator) -> np.ndarray:
    """Orthogonal matrix (semi-orthogonal when not square) scaled by ``gain``."""
    rows, cols = shape
    a = rng.standard_normal((max(rows, cols), min(rows, cols)))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    if rows < cols:
        q = q.T
    return np.ascontiguousarray(gain * q[:rows, :cols])


def _param(value: np.ndarray, name: str) -> Tensor:
    return Tensor(value, requires_grad=True, name=name)


def init_mlp_params(obs_dim: int, act_dim: int, seed: int = 0, hidden: int = 64) -> dict[str, Tensor]:
    if obs_dim <= 0 or act_dim <= 0 or hidden <= 0:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    raw = {
        "W1": orthogonal((obs_dim, hidden), HIDDEN_GAIN, rng),
        "b1": np.zeros(hidden),
        "W2": orthogonal((hidden, hidden), HIDDEN_GAIN, rng),
        "b2": np.zeros(hidden),
        "W_mu": orthogonal((hidden, act_dim), ACTION_GAIN, rng),
        "b_mu": np.zeros(act_dim),
        "log_std": np.zeros(act_dim),
        "W_v": orthogonal((hidden, 1), VALUE_GAIN, rng),
        "b_v": np.zeros(1),
    }
    return {k: _param(v, k) for k, v in raw.items()}


def init_lstm_params(
    obs_dim: int, act_dim: int, seed: int = 0, hidden: int = 64, proj_hidden: int = 64
) -> dict[str, Tensor]:
    if min(obs_dim, act_dim, hidden, proj_hidden) <= 0:
        raise ValueError("dimensions must be positive")
    rng = np.random.default_rng(seed)
    raw: dict[str, np.ndarray] = {}
    for gate in GATES:
        raw[f"W_i{gate}"] = orthogonal((obs_dim, hidden), RECURRENT_GAIN, rng)
    for gate in GATES:
        raw[f"W_h{gate}"] = orthogonal((hidden, hidden), RECURRENT_GAIN, rng)
    for gate in GATES:
        raw[f"b_{gate}"] = np.ones(hidden) if gate == "f" else np.zeros(hidden)
    raw["W_p"] = orthogonal((hidden, proj_hidden), HIDDEN_GAIN, rng)
    raw["b_p"] = np.zeros(proj_hidden)
    raw["W_mu"] = orthogonal((proj_hidden, act_dim), ACTION_GAIN, rng)
    raw["b_mu"] = np.zeros(act_dim)
    raw["log_std"] = np.zeros(act_dim)
    raw["W_v"] = orthogonal((hidden, 1), VALUE_GAIN, rng)
    raw["b_v"] = np.zeros(1)
    return {k: _param(v, k) for k, v in raw.items()}


# ---------------------------------------------------------------------------
# MLP


def _linear(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    return x @ W + b.expand_rows(x.shape[0])


def mlp_forward(params: dict[str, Tensor], obs: Tensor) -> tuple[Tensor, Tensor]:
    """Return ``(mean [B x act_dim], value [B x 1])`` for a batch of observations."""
    if obs.ndim != 2 or obs.shape[1] != params["W1"].shape[0]:
        raise ShapeError(f"obs shape {obs.shape} does not match W1 {params['W1'].shape}")
    h1 = _linear(obs, params["W1"], params["b1"]).tanh()
    h2 = _linear(h1, params["W2"], params["b2"]).tanh()
    mean = _linear(h2, params["W_mu"], params["b_mu"])
    value = _linear(h2, params["W_v"], params["b_v"])
    return mean, value


# ---------------------------------------------------------------------------
# LSTM


@dataclass
class RecurrentState:
    h: Tensor
    c: Tensor

    @classmethod
    def zeros(cls, hidden: int, batch: int | None = None) -> "RecurrentState":
        shape = (hidden,) if batch is None else (batch, hidden)
        return cls(Tensor(np.zeros(shape)), Tensor(np.zeros(shape)))


def _fused_gates(params: dict[str, Tensor]) -> tuple[Tensor, Tensor, Tensor]:
    Wx = concat([params[f"W_i{g}"] for g in GATES], axis=1)
    Wh = concat([params[f"W_h{g}"] for g in GATES], axis=1)
    b = concat([params[f"b_{g}"] for g in GATES], axis=0)
    return Wx, Wh, b


def _cell(pre: Tensor, c: Tensor, H: int) -> tuple[Tensor, Tensor]:
    hc = lstm_cell(pre, c)
    return hc[:, :H], hc[:, H:]


def lstm_step(
    params: dict[str, Tensor], obs: Tensor, state: RecurrentState
) -> tuple[Tensor, RecurrentState]:
    """One LSTM transition for a single observation vector."""
    H = params["W_hi"].shape[0]
    if obs.ndim != 1 or obs.shape[0] != params["W_ii"].shape[0]:
        raise ShapeError(f"obs shape {obs.shape} does not match W_ii {params['W_ii'].shape}")
    if state.h.shape != (H,) or state.c.shape != (H,):
        raise ShapeError(f"state shapes {state.h.shape}/{state.c.shape} do not match hidden size {H}")
    Wx, Wh, b = _fused_gates(params)
    pre = obs.reshape(1, -1) @ Wx + state.h.reshape(1, H) @ Wh + b.expand_rows(1)
    h, c = _cell(pre, state.c.reshape(1, H), H)
    h = h.reshape(H)
    return h, RecurrentState(h, c.reshape(H))


def _project(params: dict[str, Tensor], h: Tensor) -> tuple[Tensor, Tensor]:
    z = _linear(h, params["W_p"], params["b_p"]).tanh()
    mean = _linear(z, params["W_mu"], params["b_mu"])
    value = _linear(h, params["W_v"], params["b_v"])
    return mean, value


def lstm_unroll(
    params: dict[str, Tensor],
    obs: np.ndarray,
    h0: Tensor,
    c0: Tensor,
    starts: np.ndarray | None = None,
) -> tuple[list[Tensor], list[Tensor], list[Tensor]]:
    """Batched unroll over ``obs`` of shape [T, B, obs_dim].

    ``starts[t, b]`` marks the first step of an episode; the state entering
    that step is zeroed.  Returns per-step outputs plus the entering states
    ``hs_in[t], cs_in[t]`` (length T + 1, the last being the final state).
    """
    T, B, D = obs.shape
    H = params["W_hi"].shape[0]
    if D != params["W_ii"].shape[0]:
        raise ShapeError(f"obs dim {D} does not match W_ii {params['W_ii'].shape}")
    if h0.shape != (B, H) or c0.shape != (B, H):
        raise ShapeError(f"initial state shapes {h0.shape}/{c0.shape} do not match ({B}, {H})")
    Wx, Wh, b = _fused_gates(params)
    bias = b.expand_rows(B)
    h, c = h0, c0
    outputs, hs_in, cs_in = [], [], []
    for t in range(T):
        if starts is not None and starts[t].any():
            keep = Tensor._wrap(np.repeat((~starts[t]).astype(np.float64)[:, None], H, axis=1))
            h, c = h * keep, c * keep
        hs_in.append(h)
        cs_in.append(c)
        pre = Tensor._wrap(obs[t]) @ Wx + h @ Wh + bias
        h, c = _cell(pre, c, H)
        outputs.append(h)
    hs_in.append(h)
    cs_in.append(c)
    return outputs, hs_in, cs_in


def policy_forward_recurrent(
    params: dict[str, Tensor],
    obs_seq: Tensor,
    init: RecurrentState,
    episode_starts: Sequence[bool] | None = None,
) -> tuple[Tensor, Tensor, list[RecurrentState]]:
    """Unroll one sequence [T x obs_dim] and project every output.

    ``states[t]`` is the state entering step ``t``; ``states[T]`` is the
    state after the final step.
    """
    if obs_seq.ndim != 2 or obs_seq.shape[0] < 1:
        raise ShapeError(f"obs_seq must be [T x obs_dim] with T >= 1, got {obs_seq.shape}")
    T = obs_seq.shape[0]
    H = params["W_hi"].shape[0]
    starts = None
    if episode_starts is not None:
        starts = np.asarray(episode_starts, dtype=bool).reshape(T, 1)
    outs, hs, cs = lstm_unroll(
        params, obs_seq.data.reshape(T, 1, -1), init.h.reshape(1, H), init.c.reshape(1, H), starts
    )
    hseq = stack([o.reshape(H) for o in outs], axis=0)
    means, values = _project(params, hseq)
    states = [RecurrentState(h.reshape(H), c.reshape(H)) for h, c in zip(hs, cs)]
    return means, values, states


# ---------------------------------------------------------------------------
# Gaussian


@dataclass
class GaussianAction:
    mean: Tensor
    log_std: Tensor
    sample: Tensor
    log_prob: float


def clamp_log_std(log_std: Tensor) -> Tensor:
    return log_std.clip(LOG_STD_MIN, LOG_STD_MAX)


def gaussian_log_prob(mean: Tensor, log_std: Tensor, x) -> Tensor:
    """Diagonal-Gaussian log-density; mean is [B x A] (or [A]), returns [B] (or scalar)."""
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    if x.shape != mean.shape:
        raise ShapeError(f"sample shape {x.shape} differs from mean shape {mean.shape}")
    single = mean.ndim == 1
    if single:
        mean = mean.reshape(1, -1)
        x = x.reshape(1, -1)
    n, A = mean.shape
    if log_std.shape != (A,):
        raise ShapeError(f"log_std shape {log_std.shape} does not match action dim {A}")
    ls = log_std.expand_rows(n)
    z = (Tensor._wrap(x) - mean) * (-ls).exp()
    per_dim = z.square() * -0.5 - ls - HALF_LOG_2PI
    lp = per_dim.sum(axis=1)
    return lp.reshape(()) if single else lp


def gaussian_sample_and_logprob(mean: Tensor, log_std: Tensor, noise) -> GaussianAction:
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape != mean.shape:
        raise ShapeError(f"noise shape {noise.shape} differs from mean shape {mean.shape}")
    ls = clamp_log_std(log_std)
    sample = mean.data + np.exp(ls.data) * noise
    lp = gaussian_log_prob(mean.detach(), ls.detach(), sample)
    return GaussianAction(mean, ls, Tensor(sample), float(lp.data.sum()) if lp.ndim == 0 else lp.data)


def gaussian_entropy(log_std: Tensor) -> Tensor:
    return (log_std + HALF_LOG_2PIE).sum()


def gaussian_kl(mu_old: Tensor, ls_old: Tensor, mu_new: Tensor, ls_new: Tensor) -> Tensor:
    """KL(old || new) per row for diagonal Gaussians with state-independent log-stds."""
    if mu_old.shape != mu_new.shape:
        raise ShapeError(f"mean shapes {mu_old.shape} and {mu_new.shape} differ")
    n = mu_old.shape[0]
    lo = ls_old.expand_rows(n)
    ln = ls_new.expand_rows(n)
    var_ratio = ((lo - ln) * 2.0).exp()
    diff = mu_old - mu_new
    per_dim = (ln - lo) + (var_ratio + diff.square() * (-ln * 2.0).exp()) * 0.5 - 0.5
    return per_dim.sum(axis=1)


# ---------------------------------------------------------------------------
# policy objects


@dataclass
class Distribution:
    mean: Tensor  # [n x A]
    log_std: Tensor  # [A], clamped
    value: Tensor  # [n]


class MlpPolicy:
    recurrent = False
    kind = "mlp"

    def __init__(self, obs_dim: int, act_dim: int, seed: int = 0, hidden: int = 64, params=None):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden = hidden
        self.params = params if params is not None else init_mlp_params(obs_dim, act_dim, seed, hidden)

    @classmethod
    def from_params(cls, params: dict[str, Tensor]) -> "MlpPolicy":
        obs_dim, hidden = params["W1"].shape
        return cls(obs_dim, params["W_mu"].shape[1], hidden=hidden, params=params)

    def initial_state(self, batch: int):
        return None

    def act(self, obs: np.ndarray, state=None, starts=None):
        """Inference on a batch [B x obs_dim]: returns (mean, log_std, value, state)."""
        mean, value = mlp_forward(self.params, Tensor._wrap(np.asarray(obs, dtype=np.float64)))
        ls = clamp_log_std(self.params["log_std"])
        return mean.data, ls.data, value.data[:, 0], None

    def distribution_log_std(self) -> np.ndarray:
        return clamp_log_std(self.params["log_std"]).data

    def distribution(self, batch) -> Distribution:
        mean, value = mlp_forward(self.params, Tensor._wrap(batch.obs))
        return Distribution(mean, clamp_log_std(self.params["log_std"]), value.reshape(-1))


class LstmPolicy:
    recurrent = True
    kind = "lstm"

    def __init__(
        self, obs_dim: int, act_dim: int, seed: int = 0, hidden: int = 64, proj_hidden: int = 64, params=None
    ):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.hidden = hidden
        self.params = (
            params if params is not None else init_lstm_params(obs_dim, act_dim, seed, hidden, proj_hidden)
        )

    @classmethod
    def from_params(cls, params: dict[str, Tensor]) -> "LstmPolicy":
        obs_dim, hidden = params["W_ii"].shape
        proj_hidden = params["W_p"].shape[1]
        return cls(obs_dim, params["W_mu"].shape[1], hidden=hidden, proj_hidden=proj_hidden, params=params)

    def initial_state(self, batch: int) -> tuple[np.ndarray, np.ndarray]:
        return np.zeros((batch, self.hidden)), np.zeros((batch, self.hidden))

    def act(self, obs: np.ndarray, state, starts=None):
        """One step for B parallel streams; ``state`` is the (h, c) entering this step."""
        obs = np.asarray(obs, dtype=np.float64)
        h, c = state
        outs, _, cs = lstm_unroll(
            self.params,
            obs[None],
            Tensor._wrap(h),
            Tensor._wrap(c),
            None if starts is None else np.asarray(starts, dtype=bool)[None],
        )
        mean, value = _project(self.params, outs[0])
        ls = clamp_log_std(self.params["log_std"])
        return mean.data, ls.data, value.data[:, 0], (outs[0].data, cs[-1].data)

    def unroll_states(self, obs: np.ndarray, h0: np.ndarray, c0: np.ndarray, starts: np.ndarray):
        """Entering states for every step of [T, B] streams (no recording)."""
        _, hs, cs = lstm_unroll(self.params, obs, Tensor._wrap(h0), Tensor._wrap(c0), starts)
        return np.stack([h.data for h in hs[:-1]]), np.stack([c.data for c in cs[:-1]])

    def distribution_log_std(self) -> np.ndarray:
        return clamp_log_std(self.params["log_std"]).data

    def distribution(self, batch) -> Distribution:
        """Sequence minibatch: obs [L, S, D], starts [L, S], h0/c0 [S, H]; rows are time-major."""
        L, S, _ = batch.obs.shape
        outs, _, _ = lstm_unroll(
            self.params, batch.obs, Tensor._wrap(batch.h0), Tensor._wrap(batch.c0), batch.starts
        )
        hseq = concat(outs, axis=0) if L > 1 else outs[0]
        mean, value = _project(self.params, hseq)
        return Distribution(mean, clamp_log_std(self.params["log_std"]), value.reshape(-1))


POLICIES = {"mlp": MlpPolicy, "lstm": LstmPolicy}


def make_policy(kind: str, obs_dim: int, act_dim: int, seed: int = 0, hidden: int = 64):
    try:
        cls = POLICIES[kind]
    except KeyError:
        raise ValueError(f"unknown policy {kind!r}; expected one of {sorted(POLICIES)}") from None
    return cls(obs_dim, act_dim, seed=seed, hidden=hidden)


def policy_from_params(params: dict[str, Tensor]):
    return LstmPolicy.from_params(params) if "W_ii" in params else MlpPolicy.from_params(params)
