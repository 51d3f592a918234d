"""Target-network TD learning with over-parameterized linear features on offline data."""
from .data import EmpiricalModel, NisModel, TransitionDataset, build_empirical
from .learners import LearnerConfig, LearnerState, Problem, run
from .mdp import Mdp, Policy

__all__ = [
    "EmpiricalModel", "NisModel", "TransitionDataset", "build_empirical",
    "LearnerConfig", "LearnerState", "Problem", "run", "Mdp", "Policy",
]
