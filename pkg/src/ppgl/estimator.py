"""scikit-learn style wrapper around :func:`ppgl.harness.train`.

``fit`` trains on the configured environment (``X``/``y`` are ignored, the
environment is the data source), ``predict`` maps an observation batch to
actions and ``score`` is the mean evaluation return.
"""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from .config import TrainConfig


class PolicyGradientAgent(BaseEstimator):
    """PPO / PPG agent with MLP or LSTM policy.

    Constructor arguments mirror :class:`ppgl.config.TrainConfig`; only the
    commonly tuned ones are exposed so ``get_params`` / ``clone`` stay useful.
    """

    def __init__(
        self,
        env: str = "cartpole",
        algo: str = "ppo",
        policy: str = "mlp",
        total_timesteps: int = 200_000,
        seed: int = 0,
        n_envs: int = 8,
        hidden: int = 64,
        lr: float = 3e-4,
        gamma: float = 0.99,
        lam: float = 0.95,
        clip_eps: float = 0.2,
        epochs: int = 10,
        minibatch_size: int = 64,
        horizon: int = 256,
        recurrent_chunk: int = 0,
        n_pi: int = 32,
        aux_epochs: int = 6,
        stale_hidden: bool = False,
        eval_episodes: int = 100,
    ):
        self.env = env
        self.algo = algo
        self.policy = policy
        self.total_timesteps = total_timesteps
        self.seed = seed
        self.n_envs = n_envs
        self.hidden = hidden
        self.lr = lr
        self.gamma = gamma
        self.lam = lam
        self.clip_eps = clip_eps
        self.epochs = epochs
        self.minibatch_size = minibatch_size
        self.horizon = horizon
        self.recurrent_chunk = recurrent_chunk
        self.n_pi = n_pi
        self.aux_epochs = aux_epochs
        self.stale_hidden = stale_hidden
        self.eval_episodes = eval_episodes

    def to_config(self) -> TrainConfig:
        """Validated training config built from the current parameters."""
        return TrainConfig(**self.get_params(), record_wallclock=False)

    def fit(self, X=None, y=None, out_dir=None):
        from .harness import train

        config = self.to_config().replace(eval_episodes=0)
        result = train(config, out_dir=out_dir)
        self.policy_ = result.policy
        self.metrics_ = result.metrics
        self.n_updates_ = result.updates
        self.events_ = result.events
        self.n_features_in_ = result.policy.obs_dim
        return self

    def _check_obs(self, X) -> np.ndarray:
        check_is_fitted(self, "policy_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"X has {X.shape[1]} features, policy expects {self.n_features_in_}")
        return X

    def predict(self, X) -> np.ndarray:
        """Deterministic actions (distribution means) for a batch of observations.

        Recurrent policies treat each row as the first step of an episode.
        """
        X = self._check_obs(X)
        mean, _, _, _ = self.policy_.act(X, self.policy_.initial_state(len(X)))
        return mean

    def predict_value(self, X) -> np.ndarray:
        X = self._check_obs(X)
        _, _, value, _ = self.policy_.act(X, self.policy_.initial_state(len(X)))
        return value

    def evaluate(self, n_episodes: int | None = None, mode: str = "deterministic", seed: int | None = None):
        from .harness import evaluate

        check_is_fitted(self, "policy_")
        n = self.eval_episodes if n_episodes is None else n_episodes
        return evaluate(self.policy_, self.env, n, mode=mode, seed=self.seed + 10_000 if seed is None else seed)

    def score(self, X=None, y=None) -> float:
        """Mean deterministic evaluation return (higher is better)."""
        return self.evaluate().mean

    def __sklearn_tags__(self):
        tags = super().__sklearn_tags__()
        tags.requires_fit = True
        tags.target_tags.required = False
        return tags

