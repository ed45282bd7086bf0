import numpy as np
import pytest

from degmart import AdaptedDrift, FeatureBasis, InvalidArgumentError, RngSpec, builtin_model, sample_brownian
from degmart.theorems import (innovation_batch, innovation_path, innovation_represent, represent_functional,
                              verify_innovation_martingale, verify_zeta, zeta_path)

CUBIC_0 = FeatureBasis("polynomial", 3, (0,))


def _driver(grid, d, n, seed):
    return sample_brownian(grid, d, n, RngSpec(seed))


def _sin_b1():
    return AdaptedDrift(lambda t, b, x: np.stack([np.sin(b[:, -1, 0]), np.zeros(b.shape[0])], axis=1), 2,
                        label="(sin B1, 0)")


def test_zero_drift_gives_driver_and_unit_zeta(grid64):
    B = _driver(grid64, 2, 2000, 1)
    model = builtin_model("M3")
    assert np.array_equal(innovation_path(model, None, grid64, B), B.increments)
    assert np.array_equal(zeta_path(model, None, grid64, B), np.ones((2000, 65)))


def test_kernel_drift_shifts_innovation(grid64):
    B = _driver(grid64, 2, 5000, 2)
    dZ = innovation_path(builtin_model("M2"), AdaptedDrift.constant([0.0, 0.7]), grid64, B)
    assert np.allclose(dZ, B.increments + np.array([0.0, 0.7]) * grid64.dt, atol=1e-15)
    assert not np.allclose(dZ, B.increments)


def test_deterministic_drift_leaves_projected_innovation(grid64):
    a = 0.6
    B = _driver(grid64, 2, 5000, 3)
    model = builtin_model("M2")
    u = AdaptedDrift.constant([a, 0.0])
    dZ = innovation_path(model, u, grid64, B)
    assert np.allclose(dZ, B.increments, atol=1e-9)
    zeta = zeta_path(model, u, grid64, B)
    closed = np.exp(-a * B.terminal()[:, 0] - 0.5 * a * a)
    assert np.allclose(zeta[:, -1], closed, rtol=1e-7)


def test_innovation_martingale_zero_drift(grid64):
    rep = verify_innovation_martingale(builtin_model("M3"), None, grid64, 20_000, seed=4)
    assert rep.passed, rep.summary()
    assert len(rep.statistics) == 2 * 3 * 2


def _sin_b1_from_state(dt):
    # on M2 the perturbed chain is X_k = B1_k + sum_{j<k} sin(B1_j) dt, so B1 is read back from the state
    def func(t, b, x):
        b1 = x[:, 0, 0].copy()
        for k in range(1, x.shape[1]):
            b1 = x[:, k, 0] - (x[:, k - 1, 0] - b1) - np.sin(b1) * dt
        return np.stack([np.sin(b1), np.zeros(x.shape[0])], axis=1)
    return AdaptedDrift(func, 2, state_feedback=True, label="(sin B1, 0) from X")


def test_driver_feedback_is_state_feedback_on_m2(grid64):
    B = _driver(grid64, 2, 2000, 5)
    model = builtin_model("M2")
    a = innovation_batch(model, _sin_b1(), grid64, B, CUBIC_0)
    b = innovation_batch(model, _sin_b1_from_state(grid64.dt), grid64, B, CUBIC_0)
    assert np.allclose(a.udot, b.udot, atol=1e-12)


def test_innovation_martingale_driver_feedback(grid64):
    rep = verify_innovation_martingale(builtin_model("M2"), _sin_b1_from_state(grid64.dt), grid64, 100_000,
                                       seed=5, conditioning="exact")
    assert rep.passed, rep.summary()
    # a finite lag basis only approximates the conditioning, and its truncation bias stays visible
    rep = verify_innovation_martingale(builtin_model("M2"), _sin_b1(), grid64, 100_000, CUBIC_0, seed=5)
    assert 0 < rep.diagnostics["mean_sq_drift_gap"] < 0.05


def test_innovation_martingale_random_projector(grid64):
    rep = verify_innovation_martingale(builtin_model("M3"), AdaptedDrift.constant([0.5, 0.0]), grid64, 50_000,
                                       seed=6)
    assert rep.passed, rep.summary()


@pytest.mark.parametrize("name,u", [("M2", [0.5, 0.0]), ("M3", [0.5, 0.0])])
def test_zeta_consistency(grid64, name, u):
    rep = verify_zeta(builtin_model(name), AdaptedDrift.constant(u), grid64, 50_000, seed=7)
    assert rep.passed, rep.summary()


def test_innovation_represent_linear_target(grid64):
    t = grid64.times[:-1]
    f = np.stack([1.0 + t, np.sin(2 * np.pi * t)], axis=1)
    res = innovation_represent(lambda b: np.einsum("kj,mkj->m", f, b.P.apply(b.dZ)), builtin_model("M2"),
                               _sin_b1(), grid64, 50_000, seed=8)
    pf = f.copy()
    pf[:, 1] = 0.0
    assert res.relative_error(pf) <= 0.05


def test_innovation_represent_constant(grid64):
    res = innovation_represent(lambda b: np.full(b.X.n_paths, -1.0), builtin_model("M3"),
                               AdaptedDrift.constant([0.3, 0.0]), grid64, 20_000, seed=9)
    assert res.mean == -1.0
    assert abs(res.energy.mean) <= 3 * res.energy.std_error + 1e-9


def test_innovation_represent_reduces_without_drift(grid64):
    F = lambda b: np.sin(b.X.values[:, -1, 0])
    a = innovation_represent(F, builtin_model("M2"), None, grid64, 5000, seed=10)
    b = represent_functional(F, builtin_model("M2"), grid64, 5000, seed=10)
    assert np.allclose(a.coefficients, b.coefficients, atol=1e-12)
    assert a.residual_l2 == pytest.approx(b.residual_l2, rel=1e-10)


def test_exact_conditioning_needs_state_feedback(grid64):
    B = _driver(grid64, 2, 500, 11)
    with pytest.raises(InvalidArgumentError):
        innovation_batch(builtin_model("M2"), _sin_b1(), grid64, B, conditioning="exact")
    with pytest.raises(InvalidArgumentError):
        innovation_batch(builtin_model("M2"), None, grid64, B, conditioning="oracle")
    batch = innovation_batch(builtin_model("M2"), AdaptedDrift.constant([0.4, 0.1]), grid64, B,
                             conditioning="exact")
    assert np.allclose(batch.cond, [0.4, 0.0])
