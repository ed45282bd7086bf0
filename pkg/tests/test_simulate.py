import numpy as np
import pytest

from degmart import (AdaptedDrift, InvalidArgumentError, ModelSpec, RngSpec, SimulationError, TimeGrid, builtin_model, euler_solve,
                     girsanov_weight, sample_brownian, simulate)
from degmart.paths import MCEstimate

from conftest import within_3se


def test_m1_state_is_driver(brownian):
    B = brownian(32, 1, 100)
    X = euler_solve(builtin_model("M1"), B)
    assert np.array_equal(X.values, B.values)


def test_m2_kernel_drift_is_invisible(brownian):
    B = brownian(32, 2, 100)
    model = builtin_model("M2")
    assert np.array_equal(euler_solve(model, B, AdaptedDrift.constant([0.0, 3.0])).values,
                          euler_solve(model, B).values)


def test_m2_constant_drift_closed_form(brownian):
    B = brownian(64, 2, 200)
    a = 0.7
    X = euler_solve(builtin_model("M2"), B, AdaptedDrift.constant([a, 0.0]))
    assert np.max(np.abs(X.values[:, :, 0] - (B.values[:, :, 0] + a * B.grid.times))) < 1e-12


def test_zero_drift_is_bit_identical(brownian):
    B = brownian(16, 2, 50)
    model = builtin_model("M3")
    assert np.array_equal(euler_solve(model, B, AdaptedDrift.zero(2)).values, euler_solve(model, B).values)


def test_overflow_reports_step(brownian):
    model = ModelSpec(1, 1, [0.0], lambda t, h: np.ones((1, 1)), lambda t, h: 1e3 * (1.0 + h[:, -1] ** 2))
    with pytest.raises(SimulationError) as info:
        euler_solve(model, brownian(64, 1, 10))
    assert isinstance(info.value.step, int)


def test_dimension_checks(brownian):
    with pytest.raises(InvalidArgumentError):
        euler_solve(builtin_model("M2"), brownian(8, 1, 5))


def test_clip_stops_drift_after_budget(brownian):
    B = brownian(64, 2, 20)
    _, applied = euler_solve(builtin_model("M2"), B, AdaptedDrift.constant([2.0, 0.0]), clip_u=1.0,
                             return_drift=True)
    energy = np.cumsum(np.einsum("mkj,mkj->mk", applied, applied), axis=1) * B.grid.dt
    # the drift runs until the accumulated energy first exceeds R, then stops
    assert np.all(energy[:, -1] <= 1.0 + 4.0 * B.grid.dt + 1e-12)
    assert np.all(applied[:, -1] == 0)


def test_girsanov_zero_drift(brownian):
    assert np.array_equal(girsanov_weight(AdaptedDrift.zero(2), brownian(8, 2, 10)), np.ones(10))


@pytest.mark.parametrize("sign", [1, -1])
def test_girsanov_single_step(brownian, sign):
    B = brownian(1, 2, 30)
    w = girsanov_weight(AdaptedDrift.constant([1.0, 0.0]), B, sign=sign)
    assert np.allclose(w, np.exp(sign * B.terminal()[:, 0] - 0.5), rtol=1e-14)


def test_girsanov_mean_one():
    B = sample_brownian(TimeGrid(64), 2, 100_000, RngSpec(2))
    u = AdaptedDrift(lambda t, b, x: np.array([np.cos(2 * np.pi * t), 0.5]), 2)
    est = MCEstimate.from_samples(girsanov_weight(u, B))
    assert within_3se(est, 1.0)


def test_weak_error_m1_second_moment():
    _, X = simulate(builtin_model("M1"), TimeGrid(64), 100_000, seed=3)
    assert within_3se(MCEstimate.from_samples(X.values[:, -1, 0] ** 2), 1.0)


def test_simulate_worker_count_invariant():
    grid = TimeGrid(16)
    model = builtin_model("M5")
    _, a = simulate(model, grid, 20_000, seed=9)
    _, b = simulate(model, grid, 20_000, seed=9, n_jobs=3)
    assert np.array_equal(a.values, b.values)
