"""Group factor policy search with periodic basis policies and a
granular-media crawler simulator."""

__version__ = "0.1.0"

from .baselines import BaselineConfig, diagonal_gaussian_ps, random_search
from .learner import LearnConfig, LearningTrace, learn
from .policy import (CRAWLER_GROUPS, BasisConfig, ExplorationDraw, GroupStructure,
                     PolicyParams, compute_action, initial_params, mean_action)
from .variational import HyperParams

__all__ = ["__version__", "BaselineConfig", "diagonal_gaussian_ps", "random_search",
           "LearnConfig", "LearningTrace", "learn", "CRAWLER_GROUPS", "BasisConfig",
           "ExplorationDraw", "GroupStructure", "PolicyParams", "compute_action",
           "initial_params", "mean_action", "HyperParams"]
