"""Imitation learning with double exploration (ILDE) on finite episodic MDPs."""

from .config import ExperimentConfig, parse_config
from .envs import build_environment
from .evaluation import compute_regret, improvement_vs_expert, sample_efficiency, saddle_loss, saddle_policy
from .experiment import run_experiment
from .kernels import BACKEND
from .mdp import DemoSet, EpisodicMdp, StochasticPolicy, TrajectoryBatch, expected_return, make_demos, rollout
from .npg import NpgConfig, run_ilde_npg
from .practical import PracticalConfig, run_ilde_practical

__version__ = "0.1.0"

__all__ = [
    "BACKEND", "DemoSet", "EpisodicMdp", "ExperimentConfig", "NpgConfig", "PracticalConfig", "StochasticPolicy",
    "TrajectoryBatch", "build_environment", "compute_regret", "expected_return", "improvement_vs_expert",
    "make_demos", "parse_config", "rollout", "run_experiment", "run_ilde_npg", "run_ilde_practical",
    "sample_efficiency", "saddle_loss", "saddle_policy",
]
