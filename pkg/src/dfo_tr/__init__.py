"""Model-based trust-region derivative-free optimization with AUC objectives."""

import logging

from .baselines import hinge_gd, random_search
from .config import SampleSchedule, SolverConfig, make_config_defaults
from .core import (
    EvaluatedPoint,
    FunctionObjective,
    InterpolationSet,
    Negated,
    Objective,
    TimedObjective,
    TrustRegionState,
)
from .data import LabeledDataset, load_libsvm, parse_libsvm
from .errors import DFOTRError
from .model import QuadraticModel, build_model, evaluate_model
from .objectives import (
    BENCHMARKS,
    AUCObjective,
    GaussianAUCObjective,
    GaussianPairSpec,
    auc,
    expected_auc_gaussian,
)
from .solver import (
    IterationRecord,
    RunHistory,
    initialize,
    minimize,
    minimize_stochastic,
    sample_schedule,
    step,
)
from .trsub import TrustRegionSolution, solve_trust_region

logger = logging.getLogger(__name__)

__version__ = "0.1.0"

__all__ = [
    "AUCObjective",
    "BENCHMARKS",
    "GaussianAUCObjective",
    "GaussianPairSpec",
    "LabeledDataset",
    "auc",
    "expected_auc_gaussian",
    "hinge_gd",
    "load_libsvm",
    "parse_libsvm",
    "random_search",
    "DFOTRError",
    "EvaluatedPoint",
    "FunctionObjective",
    "InterpolationSet",
    "IterationRecord",
    "Negated",
    "Objective",
    "QuadraticModel",
    "RunHistory",
    "SampleSchedule",
    "SolverConfig",
    "TimedObjective",
    "TrustRegionSolution",
    "TrustRegionState",
    "build_model",
    "evaluate_model",
    "initialize",
    "make_config_defaults",
    "minimize",
    "minimize_stochastic",
    "sample_schedule",
    "solve_trust_region",
    "step",
]
