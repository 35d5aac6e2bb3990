"""PPO / PPG with MLP and LSTM policies on small control and assistive-arm tasks."""
from .config import TrainConfig
from .estimator import PolicyGradientAgent
from .harness import evaluate, random_baseline, train

__version__ = "0.1.0"

__all__ = ["PolicyGradientAgent", "TrainConfig", "evaluate", "random_baseline", "train", "__version__"]
