"""Support vector clustering with a budgeted stochastic-gradient one-class SVM."""

__version__ = "0.1.0"

from .assignment import AssignConfig, ClusterSolution, assign_clusters
from .cvi import CviReport, compactness, davies_bouldin, nmi, purity, rand_index, report
from .data import (Dataset, gen_gaussian_mixture, gen_moons, gen_rings, load_csv, load_iris,
                   save_csv, standardize)
from .estimator import BudgetedOneClassSVM, SupportVectorClustering
from .exceptions import (BudgetedSVCError, ConfigError, DegenerateClusteringError,
                         DegeneratePointError, InvalidInputError, InvalidStateError,
                         NumericalFailureError, ParseError)
from .kernel_model import KernelExpansion, KernelSpec
from .theory import AuditReport, BoundSet, audit_trace, compute_bounds, regret_bound
from .trainer import TrainConfig, TrainTrace, objective, train

__all__ = [
    "AssignConfig", "AuditReport", "BoundSet", "BudgetedOneClassSVM", "BudgetedSVCError",
    "ClusterSolution", "ConfigError", "CviReport", "Dataset", "DegenerateClusteringError",
    "DegeneratePointError", "InvalidInputError", "InvalidStateError", "KernelExpansion",
    "KernelSpec", "NumericalFailureError", "ParseError", "SupportVectorClustering",
    "TrainConfig", "TrainTrace", "assign_clusters", "audit_trace", "compactness",
    "compute_bounds", "davies_bouldin", "gen_gaussian_mixture", "gen_moons", "gen_rings",
    "load_csv", "load_iris", "nmi", "objective", "purity", "rand_index", "regret_bound",
    "report", "save_csv", "standardize", "train",
]
