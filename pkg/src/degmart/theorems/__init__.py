"""Monte Carlo verifiers of the representation, innovation and entropy results."""
from .chaos import ChaosExpansion, ChaosResult, chaos_expand
from .conditional import verify_commutation, verify_wick_conditional
from .entropy import (direct_log_density, entropy_formula, entropy_inequality_check, feedback_from_potential,
                      log_density_along, monge_ampere_residual, monge_ampere_solve)
from .functionals import (TEST_FUNCTIONALS, PathBundle, cameron_martin_from, drift_from, functional_from,
                          state_drift_from)
from .innovation import (InnovationBatch, innovation_batch, innovation_path, innovation_represent,
                         simulate_batch, verify_innovation_martingale, verify_zeta, zeta_path)
from .report import Statistic, VerificationReport, run_with_escalation
from .representation import MartingaleRepresentation, RepresentationResult, represent_functional
from .structural import martingale_problem_check, projector_algebra_check, projector_path_check

__all__ = [
    "ChaosExpansion", "ChaosResult", "chaos_expand",
    "verify_commutation", "verify_wick_conditional",
    "direct_log_density", "entropy_formula", "entropy_inequality_check", "feedback_from_potential",
    "log_density_along", "monge_ampere_residual", "monge_ampere_solve",
    "TEST_FUNCTIONALS", "PathBundle", "cameron_martin_from", "drift_from", "functional_from", "state_drift_from",
    "InnovationBatch", "innovation_batch", "innovation_path", "innovation_represent", "simulate_batch",
    "verify_innovation_martingale", "verify_zeta", "zeta_path",
    "Statistic", "VerificationReport", "run_with_escalation",
    "MartingaleRepresentation", "RepresentationResult", "represent_functional",
    "martingale_problem_check", "projector_algebra_check", "projector_path_check",
]
