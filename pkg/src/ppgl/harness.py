"""Rollout collection, the training loop, evaluation and resumable run state."""
from __future__ import annotations

import json
import logging
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .checkpoint import checkpoint_load, checkpoint_save
from .config import TrainConfig, dump_config
from .envs import ASSISTIVE, make_env
from .learn import (
    AdamState,
    AuxStore,
    DivergenceError,
    RolloutBuffer,
    compute_gae,
    ppg_auxiliary_phase,
    ppg_policy_phase,
    ppo_update,
)
from .metrics import MetricsRow, MetricsWriter
from .nets import gaussian_log_prob, make_policy, policy_from_params
from .tensor import Tensor

logger = logging.getLogger(__name__)

RECENT_EPISODES = 100


def episode_seed(seed: int, env_index: int, episode: int) -> int:
    return int(np.random.SeedSequence([seed, env_index, episode]).generate_state(1)[0])


def noise_block(seed: int, env_index: int, update: int, horizon: int, act_dim: int) -> np.ndarray:
    """Standard-normal action noise for one env over one collection block."""
    return np.random.default_rng([seed, env_index, update, 1]).standard_normal((horizon, act_dim))


def _log_prob(mean: np.ndarray, log_std: np.ndarray, actions: np.ndarray) -> np.ndarray:
    return gaussian_log_prob(Tensor._wrap(mean), Tensor._wrap(log_std), actions).data


class RolloutCollector:
    """Owns ``len(env_indices)`` environments and their in-flight episodes.

    Every random draw is keyed on ``(seed, env_index, ...)`` so a collector
    over envs ``[0..7]`` produces the same per-env streams as eight
    collectors over one env each.
    """

    def __init__(self, env_name: str, env_indices, seed: int, policy):
        self.env_name = env_name
        self.env_indices = list(env_indices)
        self.seed = seed
        self.envs = [make_env(env_name) for _ in self.env_indices]
        E = len(self.envs)
        self.episode_counts = np.zeros(E, dtype=np.int64)
        self.obs = np.stack([env.reset(episode_seed(seed, i, 0)) for env, i in zip(self.envs, self.env_indices)])
        self.starts = np.ones(E, dtype=bool)
        self.ep_return = np.zeros(E)
        self.ep_len = np.zeros(E, dtype=np.int64)
        self.recent: deque[float] = deque(maxlen=RECENT_EPISODES)
        self.state = policy.initial_state(E)
        self.total_steps = 0

    @property
    def n_envs(self) -> int:
        return len(self.envs)

    def mean_recent_reward(self) -> float:
        return float(np.mean(self.recent)) if self.recent else float("nan")

    def _entering_state(self):
        if self.state is None:
            return None
        keep = (~self.starts).astype(np.float64)[:, None]
        return self.state[0] * keep, self.state[1] * keep

    def collect(self, policy, horizon: int, update: int) -> RolloutBuffer:
        E = self.n_envs
        act_dim = self.envs[0].act_dim
        hidden = policy.hidden if policy.recurrent else None
        buf = RolloutBuffer.empty(horizon, E, self.obs.shape[1], act_dim, hidden)
        noise = np.stack(
            [noise_block(self.seed, i, update, horizon, act_dim) for i in self.env_indices], axis=1
        )
        for t in range(horizon):
            state = self._entering_state()
            buf.obs[t] = self.obs
            buf.starts[t] = self.starts
            if state is not None:
                buf.h[t], buf.c[t] = state
            mean, log_std, value, new_state = policy.act(self.obs, state)
            actions = mean + np.exp(log_std) * noise[t]
            buf.actions[t] = actions
            buf.log_probs[t] = _log_prob(mean, log_std, actions)
            buf.values[t] = value
            self.state = new_state
            next_obs = np.empty_like(self.obs)
            for e, env in enumerate(self.envs):
                try:
                    res = env.step(actions[e])
                except Exception as exc:
                    raise RuntimeError(f"env {self.env_indices[e]} ({self.env_name}) failed: {exc}") from exc
                buf.rewards[t, e] = res.reward
                buf.dones[t, e] = res.done
                self.ep_return[e] += res.reward
                self.ep_len[e] += 1
                if res.done:
                    self.recent.append(float(self.ep_return[e]))
                    self.ep_return[e] = 0.0
                    self.ep_len[e] = 0
                    self.episode_counts[e] += 1
                    seed = episode_seed(self.seed, self.env_indices[e], int(self.episode_counts[e]))
                    next_obs[e] = env.reset(seed)
                else:
                    next_obs[e] = res.observation
            self.obs = next_obs
            self.starts = buf.dones[t].copy()
        _, _, last_values, _ = policy.act(self.obs, self._entering_state())
        buf.last_values = np.where(self.starts, 0.0, last_values)
        self.total_steps += horizon * E
        return buf

    # -- checkpoint support ---------------------------------------------

    def state_arrays(self) -> dict[str, np.ndarray]:
        out = {
            "collector/obs": self.obs,
            "collector/starts": self.starts.astype(np.float64),
            "collector/episode_counts": self.episode_counts.astype(np.float64),
            "collector/ep_return": self.ep_return,
            "collector/ep_len": self.ep_len.astype(np.float64),
            "collector/recent": np.array(self.recent, dtype=np.float64),
            "collector/total_steps": np.array([float(self.total_steps)]),
        }
        if self.state is not None:
            out["collector/h"], out["collector/c"] = self.state
        for e, env in enumerate(self.envs):
            for key, value in env.get_state().items():
                out[f"env/{e}/{key}"] = value
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        self.obs = arrays["collector/obs"].copy()
        self.starts = arrays["collector/starts"].astype(bool)
        self.episode_counts = arrays["collector/episode_counts"].astype(np.int64)
        self.ep_return = arrays["collector/ep_return"].copy()
        self.ep_len = arrays["collector/ep_len"].astype(np.int64)
        self.recent = deque(arrays["collector/recent"].tolist(), maxlen=RECENT_EPISODES)
        self.total_steps = int(arrays["collector/total_steps"][0])
        if "collector/h" in arrays:
            self.state = (arrays["collector/h"].copy(), arrays["collector/c"].copy())
        for e, env in enumerate(self.envs):
            prefix = f"env/{e}/"
            env.set_state({k[len(prefix) :]: v for k, v in arrays.items() if k.startswith(prefix)})


def collect_rollouts(policy, collector: RolloutCollector, horizon: int, update: int = 0) -> RolloutBuffer:
    return collector.collect(policy, horizon, update)


def _aux_arrays(aux: AuxStore) -> dict[str, np.ndarray]:
    out = {}
    for j, entry in enumerate(aux.entries):
        for key, value in entry.items():
            out[f"aux/{j}/{key}"] = np.asarray(value, dtype=np.float64)
    return out


def _load_aux(aux: AuxStore, arrays: dict[str, np.ndarray]) -> None:
    aux.clear()
    grouped: dict[int, dict] = {}
    for name, value in arrays.items():
        if name.startswith("aux/"):
            _, j, key = name.split("/", 2)
            grouped.setdefault(int(j), {})[key] = value.copy()
    for j in sorted(grouped):
        entry = grouped[j]
        entry["starts"] = entry["starts"].astype(bool)
        aux.entries.append(entry)


# ---------------------------------------------------------------------------
# training


@dataclass
class TrainResult:
    policy: object
    adam: AdamState
    metrics: list[MetricsRow]
    updates: int
    total_steps: int
    events: list[str] = field(default_factory=list)
    eval_report: "EvalReport | None" = None


def build_policy(config: TrainConfig):
    env = make_env(config.env)
    return make_policy(config.policy, env.obs_dim, env.act_dim, seed=config.seed, hidden=config.hidden)


def checkpoint_path(out_dir: Path, update: int) -> Path:
    return out_dir / "checkpoints" / f"update_{update:06d}.ppgl"


def train(
    config: TrainConfig,
    out_dir: str | Path | None = None,
    resume: str | Path | None = None,
    max_updates: int | None = None,
) -> TrainResult:
    """Run the collect / advantage / update loop for ``config.n_updates`` updates.

    With ``out_dir`` the run writes ``resolved_config.toml``, ``metrics.csv``,
    periodic checkpoints and (when ``eval_episodes > 0``) ``eval_report.json``.
    ``resume`` continues from a checkpoint written by an identical config.
    ``max_updates`` stops early (used to simulate an interrupted run).
    """
    out_dir = Path(out_dir or config.out_dir) if (out_dir or config.out_dir) else None
    learner = config.learner_config()
    policy = build_policy(config)
    adam = AdamState.create(policy.params)
    collector = RolloutCollector(config.env, range(config.n_envs), config.seed, policy)
    aux = AuxStore()
    start = 0
    elapsed0 = 0.0
    events: list[str] = []

    if resume is not None:
        params, adam, start, ckpt = checkpoint_load(resume)
        if ckpt.digest != config.digest():
            raise ValueError(f"checkpoint {resume} was written by a different config")
        for k, p in policy.params.items():
            p.data = params[k].copy()
        collector.load_state_arrays(ckpt.arrays)
        _load_aux(aux, ckpt.arrays)
        elapsed0 = float(ckpt.arrays.get("meta/seconds", np.zeros(1))[0])

    writer = None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "resolved_config.toml").write_text(dump_config(config))
        writer = MetricsWriter(out_dir / "metrics.csv", keep=start)

    def save(update: int, elapsed: float) -> None:
        if out_dir is None:
            return
        extra = collector.state_arrays()
        extra.update(_aux_arrays(aux))
        extra["meta/seconds"] = np.array([elapsed])
        extra["meta/total_steps"] = np.array([float(collector.total_steps)])
        path = checkpoint_save(checkpoint_path(out_dir, update), policy.params, adam, config, update, extra)
        (out_dir / "latest.ppgl").write_bytes(path.read_bytes())

    rows: list[MetricsRow] = []
    t0 = time.perf_counter()
    n_updates = config.n_updates if max_updates is None else min(config.n_updates, max_updates)
    for u in range(start, n_updates):
        buf = collector.collect(policy, config.horizon, u)
        compute_gae(buf, gamma=learner.gamma, lam=learner.lam)
        rng = np.random.default_rng([config.seed, u, 2])
        metrics: dict = {}
        try:
            if config.algo == "ppo":
                metrics = ppo_update(policy, buf, learner, adam, rng, stale_hidden=config.stale_hidden)
            else:
                metrics = ppg_policy_phase(policy, buf, learner, adam, aux, rng, stale_hidden=config.stale_hidden)
                if (u + 1) % learner.n_pi == 0:
                    aux_rng = np.random.default_rng([config.seed, u, 3])
                    metrics.update(ppg_auxiliary_phase(policy, aux, learner, adam, aux_rng))
        except DivergenceError as exc:
            msg = f"update {u + 1}: divergence ({exc}); parameters restored"
            logger.warning(msg)
            events.append(msg)
        elapsed = elapsed0 + (time.perf_counter() - t0) if config.record_wallclock else 0.0
        row = MetricsRow(
            update=u + 1,
            timesteps=collector.total_steps,
            mean_reward=collector.mean_recent_reward(),
            policy_loss=metrics.get("policy_loss", float("nan")),
            value_loss=metrics.get("value_loss", float("nan")),
            entropy=metrics.get("entropy", float("nan")),
            clip_frac=metrics.get("clip_frac", float("nan")),
            approx_kl=metrics.get("approx_kl", float("nan")),
            aux_loss=metrics.get("aux_loss"),
            seconds=elapsed,
        )
        rows.append(row)
        if writer is not None:
            writer.append(row)
        logger.info(
            "update %d/%d steps=%d mean_reward=%.2f", u + 1, config.n_updates, row.timesteps, row.mean_reward
        )
        if (u + 1) % config.checkpoint_every == 0 or u + 1 == config.n_updates:
            save(u + 1, elapsed)

    done_updates = max(start, n_updates)
    result = TrainResult(policy, adam, rows, done_updates, collector.total_steps, events)
    if out_dir is not None and config.eval_episodes > 0 and done_updates == config.n_updates:
        reports = {
            mode: evaluate(policy, config.env, config.eval_episodes, mode=mode, seed=config.seed + 10_000)
            for mode in ("deterministic", "stochastic")
        }
        result.eval_report = reports["deterministic"]
        write_eval_reports(out_dir / "eval_report.json", config, reports)
    return result


# ---------------------------------------------------------------------------
# evaluation


@dataclass
class EvalReport:
    env: str
    mode: str
    episode_rewards: list[float]
    episode_lengths: list[int]
    progress: list[float]
    bonus: list[float]
    mean: float = 0.0
    std: float = 0.0
    min: float = 0.0
    max: float = 0.0

    def __post_init__(self):
        r = np.asarray(self.episode_rewards, dtype=np.float64)
        if r.size:
            self.mean = float(r.mean())
            # shifting by one sample keeps identical returns at exactly zero spread
            self.std = float((r - r[0]).std())
            self.min = float(r.min())
            self.max = float(r.max())

    @property
    def n_episodes(self) -> int:
        return len(self.episode_rewards)

    @property
    def progress_fraction(self) -> float:
        """Share of episodes with any task progress (contact / waypoint / in-window step)."""
        return float(np.mean(np.asarray(self.progress) > 0)) if self.progress else 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["progress_fraction"] = self.progress_fraction
        return d


def run_episode(env, policy_fn, seed: int, max_steps: int | None = None) -> tuple[float, int, float, float]:
    """Roll one episode; ``policy_fn(obs, t)`` returns the action.  Returns (return, length, progress, bonus)."""
    obs = env.reset(seed)
    total, bonus, progress = 0.0, 0.0, 0.0
    steps = 0
    limit = max_steps or env.max_steps
    while steps < limit:
        res = env.step(policy_fn(obs, steps))
        total += res.reward
        steps += 1
        if env.name in ASSISTIVE or env.name == "reach":
            bonus += res.info["bonus"]
            progress = max(progress, res.info["progress"])
        else:
            progress = res.info["progress"]
        obs = res.observation
        if res.done:
            break
    return total, steps, progress, bonus


def evaluate(policy, env_name: str, n_episodes: int = 100, mode: str = "stochastic", seed: int = 0) -> EvalReport:
    """Roll ``n_episodes`` full episodes (episode ``i`` seeded ``seed + i``); never touches parameters."""
    if mode not in ("stochastic", "deterministic"):
        raise ValueError(f"mode must be 'stochastic' or 'deterministic', got {mode!r}")
    env = make_env(env_name)
    rewards, lengths, progress, bonus = [], [], [], []
    for i in range(n_episodes):
        rng = np.random.default_rng([seed, i])
        state = [policy.initial_state(1)]

        def act(obs, t):
            mean, log_std, _, new_state = policy.act(obs[None], state[0])
            state[0] = new_state
            if mode == "deterministic":
                return mean[0]
            return mean[0] + np.exp(log_std) * rng.standard_normal(mean.shape[1])

        ret, length, prog, b = run_episode(env, act, seed + i)
        rewards.append(ret)
        lengths.append(length)
        progress.append(prog)
        bonus.append(b)
    return EvalReport(env_name, mode, rewards, lengths, progress, bonus)


def random_baseline(env_name: str, n_episodes: int = 100, seed: int = 0) -> EvalReport:
    """Uniform random actions in [-1, 1]; the reference any trained policy must beat."""
    env = make_env(env_name)
    rewards, lengths, progress, bonus = [], [], [], []
    for i in range(n_episodes):
        rng = np.random.default_rng([seed, i, 99])
        ret, length, prog, b = run_episode(env, lambda obs, t: rng.uniform(-1, 1, env.act_dim), seed + i)
        rewards.append(ret)
        lengths.append(length)
        progress.append(prog)
        bonus.append(b)
    return EvalReport(env_name, "random", rewards, lengths, progress, bonus)


def write_eval_reports(path: Path, config: TrainConfig, reports: dict[str, EvalReport]) -> None:
    payload = {
        "env": config.env,
        "algo": config.algo,
        "policy": config.policy,
        "seed": config.seed,
        "reports": {mode: r.to_dict() for mode, r in reports.items()},
    }
    path.write_text(json.dumps(payload, indent=2))


def load_policy(path: str | Path):
    params, _, _, _ = checkpoint_load(path)
    return policy_from_params({k: Tensor(v, requires_grad=True, name=k) for k, v in params.items()})
