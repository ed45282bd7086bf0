"""Simulation and Monte Carlo verification of martingale representation for degenerate diffusions."""
from .condexp import ConditionalExpectation, FeatureBasis, conditional_drift, fit_conditional, predict
from .exceptions import (ConfigError, DegmartError, InvalidArgumentError, ModelError, NumericalError,
                         ResidualWarning, SimulationError)
from .ito import (SimplexKernel, iterated_integral, ito_integral, log_projected_wick, log_wick,
                  projected_increments, projected_wick, wick_exponential)
from .models import (BUILTIN_MODELS, ModelSpec, TestFunction, apply_generator, builtin_model, lipschitz_gap,
                     model_from_config)
from .paths import AdaptedDrift, BrownianPath, CameronMartinFn, MCEstimate, StatePath, TimeGrid, cm_norm_sq
from .projection import ProjectorSequence, batch_projector, projector, projector_path
from .rng import RngSpec, standard_normals
from .simulate import euler_solve, girsanov_weight, sample_brownian, simulate

__version__ = "0.1.0"

__all__ = [
    "ConditionalExpectation", "FeatureBasis", "conditional_drift", "fit_conditional", "predict",
    "ConfigError", "DegmartError", "InvalidArgumentError", "ModelError", "NumericalError", "ResidualWarning",
    "SimulationError",
    "SimplexKernel", "iterated_integral", "ito_integral", "log_projected_wick", "log_wick", "projected_increments",
    "projected_wick", "wick_exponential",
    "BUILTIN_MODELS", "ModelSpec", "TestFunction", "apply_generator", "builtin_model", "lipschitz_gap",
    "model_from_config",
    "AdaptedDrift", "BrownianPath", "CameronMartinFn", "MCEstimate", "StatePath", "TimeGrid", "cm_norm_sq",
    "ProjectorSequence", "batch_projector", "projector", "projector_path",
    "RngSpec", "standard_normals",
    "euler_solve", "girsanov_weight", "sample_brownian", "simulate",
]
