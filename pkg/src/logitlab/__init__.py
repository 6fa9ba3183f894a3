"""logitlab: a simulation and numerical-optimization laboratory for the
logistic-regression maximum-likelihood estimator.

Submodules
----------
core     logistic primitives, structured whitening matrix, Fisher components
designs  covariate samplers, label mechanisms, seeded RNG streams
solver   separation LP, damped-Newton MLE, localization certificate
theory   phase boundary, statistical dimension, population risks
audit    Monte Carlo verification of design-regularity assumptions
harness  config-driven experiment grids with CSV/JSON output
"""

__version__ = "0.1.0"

from . import core, designs, solver, theory, audit, harness  # noqa: F401,E402

from .core import Dataset, ModelParams, StructuredSpectralMatrix  # noqa: E402
from .designs import DesignSpec, SeededRng, Wellspec, WorstCase  # noqa: E402
from .harness import ExperimentConfig, run_existence_grid  # noqa: E402
from .harness import run_misspec_grid, run_risk_grid  # noqa: E402
from .solver import check_separation, fit_mle  # noqa: E402
from .theory import phase_boundary, statistical_dimension_F  # noqa: E402

__all__ = [
    "Dataset",
    "DesignSpec",
    "ExperimentConfig",
    "ModelParams",
    "SeededRng",
    "StructuredSpectralMatrix",
    "Wellspec",
    "WorstCase",
    "check_separation",
    "fit_mle",
    "phase_boundary",
    "run_existence_grid",
    "run_misspec_grid",
    "run_risk_grid",
    "statistical_dimension_F",
]
