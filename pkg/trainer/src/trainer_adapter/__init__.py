"""Reference trainer adapter for the architecture discovery wire protocol."""

from .builder import BuildError, DiscoveredNet, count_params
from .training import TrainerError, evaluate_request

__all__ = ["BuildError", "DiscoveredNet", "count_params",
           "TrainerError", "evaluate_request"]
