import numpy as np

from degmart import AdaptedDrift, CameronMartinFn, FeatureBasis, builtin_model
from degmart.theorems import verify_commutation, verify_wick_conditional
from degmart.theorems.functionals import TEST_FUNCTIONALS

FOURIER_1 = FeatureBasis("fourier", 1, (0,))


def _gap_labels():
    return [f"gap[{name}]" for name in TEST_FUNCTIONALS]


def test_wick_gaps_vanish_without_degeneracy(grid64):
    h = CameronMartinFn.constant([0.7], grid64)
    rep = verify_wick_conditional(builtin_model("M1"), h, grid64, 20_000, seed=1)
    assert rep.passed
    # the projector is the identity up to the rounding of its SVD
    for label in _gap_labels():
        assert abs(rep[label].estimate.mean) <= 1e-12
    assert rep.diagnostics["max_pathwise_gap"] <= 1e-12


def test_wick_conditional_on_rank_one_model(grid64):
    h = CameronMartinFn.constant([1.0, 1.0], grid64)
    rep = verify_wick_conditional(builtin_model("M2"), h, grid64, 100_000, seed=2)
    assert rep.passed, rep.summary()
    assert [s.label for s in rep.statistics] == _gap_labels()


def test_wick_conditional_with_random_projector(grid64):
    h = CameronMartinFn.constant([1.0, 0.0], grid64)
    rep = verify_wick_conditional(builtin_model("M3"), h, grid64, 100_000, seed=3)
    assert rep.passed, rep.summary()
    assert rep.diagnostics["max_pathwise_gap"] > 0


def test_commutation_deterministic_drift_is_exact(grid64):
    t = grid64.times[:-1]
    u = AdaptedDrift(lambda s, b, x: np.array([np.cos(3 * s)]), 1)
    rep = verify_commutation(builtin_model("M1"), u, grid64, 20_000, FeatureBasis("polynomial", 1, (0,)),
                             seed=4, ridge=0.0)
    assert rep.passed
    for label in _gap_labels():
        assert abs(rep[label].estimate.mean) <= 1e-10 * (1 + np.abs(np.cos(3 * t)).sum())


def test_commutation_kernel_drift_has_zero_energy(grid64):
    u = AdaptedDrift(lambda s, b, x: np.stack([np.zeros(b.shape[0]), np.sin(b[:, -1, 1])], axis=1), 2)
    rep = verify_commutation(builtin_model("M2"), u, grid64, 20_000, seed=5, expected_energy=0.0)
    assert rep.passed, rep.summary()
    assert rep["rhs_energy"].estimate.mean == 0.0


def test_commutation_measurable_drift(grid64):
    u = AdaptedDrift(lambda s, b, x: np.stack([np.cos(b[:, -1, 0]), np.zeros(b.shape[0])], axis=1), 2)
    rep = verify_commutation(builtin_model("M2"), u, grid64, 50_000, FOURIER_1, seed=6, ridge=0.0)
    assert rep.passed, rep.summary()
    # conditioning is exact, so the two energies agree to rounding
    stat = rep["rhs_energy - projected_energy"]
    assert abs(stat.estimate.mean) <= 1e-8
