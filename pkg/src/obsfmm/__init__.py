"""Fast products with inverse observation-error covariance matrices.

Modules: ``numkernel`` (dense linear algebra), ``boxtree`` (quadtree over
observation locations), ``covmodel`` (correlation functions, reconditioning),
``svdfmm`` (plan build and apply), ``costmodel`` (flop and communication
counts) and ``harness`` (synthetic experiments).
"""

from .boxtree import BoxTree, ObservationSet, build_tree, choose_levels
from .covmodel import CorrelationFunction, CovarianceModel
from .errors import (ArgumentError, ContractError, DefinitenessError, DomainError,
                     LevelError, NumericalError, ObsFmmError)
from .svdfmm import FmmPlan, apply, plan_build

__version__ = "0.1.0"

__all__ = [
    "ArgumentError", "BoxTree", "ContractError", "CorrelationFunction", "CovarianceModel",
    "DefinitenessError", "DomainError", "FmmPlan", "LevelError", "NumericalError",
    "ObsFmmError", "ObservationSet", "apply", "build_tree", "choose_levels", "plan_build",
]
