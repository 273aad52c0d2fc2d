"""Multi-agent DDQN channel assignment and power allocation for platoon-based C-V2X."""

from .environment import EnvConfig, reset_episode, step
from .harness import ExperimentConfig, load_config, run_evaluation, run_sweep, run_training
from .mdp import Action, RewardWeights

__all__ = [
    "Action", "EnvConfig", "ExperimentConfig", "RewardWeights", "load_config", "reset_episode",
    "run_evaluation", "run_sweep", "run_training", "step",
]
__version__ = "0.1.0"
