import warnings

import numpy as np
import pytest

from degmart import (FeatureBasis, InvalidArgumentError, ResidualWarning, TimeGrid, builtin_model, projector_path,
                     simulate)
from degmart.theorems import MartingaleRepresentation, represent_functional

from conftest import within_3se


def _profile(grid):
    t = grid.times[:-1]
    return np.stack([np.cos(2 * np.pi * t), 1.0 - t], axis=1)


def test_linear_target_recovered_on_m2(grid64):
    f = _profile(grid64)
    res = represent_functional(lambda b: np.einsum("kj,mkj->m", f, b.P.apply(b.B.increments)),
                               builtin_model("M2"), grid64, 100_000, seed=1)
    pf = f.copy()
    pf[:, 1] = 0.0
    assert res.relative_error(pf) <= 0.05
    assert not res.residual_warning


def test_constant_target_has_zero_energy(grid64):
    res = represent_functional(lambda b: np.full(b.X.n_paths, 2.5), builtin_model("M3"), grid64, 20_000, seed=2)
    assert res.mean == 2.5
    assert within_3se(res.energy, 0.0)


def test_independent_target_is_not_representable(grid64):
    with pytest.warns(ResidualWarning):
        res = represent_functional(lambda b: b.B.terminal()[:, 1] ** 2, builtin_model("M2"), grid64, 50_000,
                                   seed=3)
    assert res.residual_l2 == pytest.approx(res.target_std, rel=0.01)
    assert within_3se(res.energy, 0.0)
    assert res.residual_warning


def test_state_functional_on_m3(grid64):
    # X_1 = sum P dB against dm with integrand (cos X, sin X)
    with warnings.catch_warnings():
        warnings.simplefilter("error", ResidualWarning)
        res = represent_functional(lambda b: b.X.values[:, -1, 0], builtin_model("M3"), grid64, 20_000,
                                   FeatureBasis("fourier", 1, (0,)), seed=4)
    # exact in this basis up to the backfitting stop rule
    assert res.residual_l2 <= 1e-2 * res.target_std


def test_estimator_api_and_predict(grid64):
    model = builtin_model("M1")
    B, X = simulate(model, grid64, 5000, seed=5)
    P = projector_path(model, X)
    y = B.terminal()[:, 0] + 1.0
    est = MartingaleRepresentation(FeatureBasis("polynomial", 1, (0,)), ridge=0.0, max_sweeps=50,
                                   tol=1e-14).fit(X, y, B.increments, P)
    assert est.coef_.shape == (64, 2, 1)
    assert np.allclose(est.predict(X, B.increments, P), y, atol=1e-8)
    assert np.allclose(est.integrand(X, P), 1.0, atol=1e-8)
    assert est.get_params()["ridge"] == 0.0
    assert MartingaleRepresentation().get_params()["ridge"] == 1e-8


def test_estimator_input_checks(grid64):
    model = builtin_model("M2")
    B, X = simulate(model, grid64, 100, seed=6)
    with pytest.raises(InvalidArgumentError):
        MartingaleRepresentation().fit(X, np.zeros(100), B.increments)
    with pytest.raises(InvalidArgumentError):
        MartingaleRepresentation().fit(X, np.zeros(100))
    with pytest.raises(InvalidArgumentError):
        MartingaleRepresentation(FeatureBasis("polynomial", 0, (0,))).fit(X, np.full(100, np.nan), B.increments)


def test_exclude_rank_jumps_flag():
    grid = TimeGrid(16)
    res = represent_functional(lambda b: b.X.values[:, -1, 0], builtin_model("M2"), grid, 2000, seed=7,
                               exclude_rank_jumps=True)
    assert res.integrand.shape == (2000, 16, 2)
