"""Measurement-model estimation for collocated velocity datasets."""
from .errors import *  # noqa: F401,F403
from .moments import TAGS, CollocationRecord, Collocations, MomentSet, compute_moments, correlation
from .reference import (
    ReferenceSolution,
    olr_fit,
    rlr_fit,
    triple_collocation_fit,
    variance_match,
    vm_fit,
)
from .model import (
    FitDiagnostics,
    FitResult,
    InfersParams,
    ResidualCurves,
    choose_solution,
    diagnostics,
    fit,
    forward_moments,
    residual_curves,
    strong_solve,
)
from .robust import TrimResult, trim_outliers
from .simulator import SimulationConfig, population_moments, simulate

__version__ = "0.1.0"
