import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from degmart import (CameronMartinFn, InvalidArgumentError, MCEstimate, ProjectorSequence, SimplexKernel, TimeGrid,
                     builtin_model, iterated_integral, ito_integral, projected_increments, projected_wick,
                     projector_path, simulate, wick_exponential)
from degmart.ito import block_edges, block_iterated_features, simplex_index, simplex_mask

from conftest import within_3se


def test_ito_zero(brownian):
    B = brownian(16, 2, 10)
    assert np.array_equal(ito_integral(np.zeros((16, 2)), B), np.zeros(10))


def test_ito_unit_telescopes(brownian):
    B = brownian(16, 2, 10)
    xi = np.zeros((16, 2))
    xi[:, 0] = 1.0
    assert np.allclose(ito_integral(xi, B), B.terminal()[:, 0], atol=1e-13)


def test_ito_shape_checked(brownian):
    with pytest.raises(InvalidArgumentError):
        ito_integral(np.zeros((15, 2)), brownian(16, 2, 10))


def test_ito_isometry(m2_batch):
    B, _ = m2_batch
    xi = np.zeros(B.increments.shape)
    xi[:, :, 0] = np.sin(B.values[:, :-1, 0])
    lhs = ito_integral(xi, B) ** 2
    rhs = np.einsum("mkj,mkj->m", xi, xi) * B.grid.dt
    assert within_3se(MCEstimate.from_samples(lhs - rhs), 0.0)


def test_projected_increments_identity(brownian):
    B = brownian(8, 3, 5)
    assert np.array_equal(projected_increments(ProjectorSequence.identity(5, 8, 3), B), B.increments)


def test_projected_increments_m2(m2_batch):
    B, X = m2_batch
    dm = projected_increments(projector_path(builtin_model("M2"), X), B)
    assert np.array_equal(dm[:, :, 0], B.increments[:, :, 0])
    assert np.all(dm[:, :, 1] == 0)


def test_projected_increments_isometry_m3():
    B, X = simulate(builtin_model("M3"), TimeGrid(64), 100_000, seed=4)
    P = projector_path(builtin_model("M3"), X)
    dm = projected_increments(P, B)
    m1 = dm.sum(axis=1)
    lhs = np.einsum("mj,mj->m", m1, m1)
    # E|m_1|^2 = sum_k rank(P_k) dt
    assert within_3se(MCEstimate.from_samples(lhs - P.ranks.sum(axis=1) * B.grid.dt), 0.0)


def test_wick_zero(brownian):
    B = brownian(16, 2, 10)
    assert np.array_equal(wick_exponential(CameronMartinFn.constant([0, 0], B.grid), B), np.ones(10))


def test_wick_constant_closed_form(brownian):
    B = brownian(64, 2, 100)
    w = wick_exponential(CameronMartinFn.constant([1.0, 0.0], B.grid), B)
    assert np.allclose(w, np.exp(B.terminal()[:, 0] - 0.5), rtol=1e-12)


def test_wick_mean_one(m2_batch):
    B, _ = m2_batch
    h = CameronMartinFn.from_function(lambda t: np.stack([np.cos(3 * t), 0.5 - t], axis=1), B.grid)
    assert within_3se(MCEstimate.from_samples(wick_exponential(h, B)), 1.0)


def test_projected_wick_identity_reduces(brownian):
    B = brownian(32, 1, 50)
    h = CameronMartinFn.from_function(lambda t: np.sin(t)[:, None], B.grid)
    P = ProjectorSequence.identity(50, 32, 1)
    assert np.array_equal(projected_wick(h, P, B), wick_exponential(h, B))


@pytest.mark.parametrize("a, b", [(1.0, 1.0), (0.5, -2.0), (0.0, 3.0)])
def test_projected_wick_m2_closed_form(m2_batch, a, b):
    B, X = m2_batch
    P = projector_path(builtin_model("M2"), X)
    got = projected_wick(CameronMartinFn.constant([a, b], B.grid), P, B)
    exact = np.exp(a * B.terminal()[:, 0] - 0.5 * a * a)
    assert np.max(np.abs(got - exact) / np.maximum(1.0, exact)) <= 1e-12


def test_projected_wick_zero(brownian):
    B = brownian(8, 2, 10)
    P = ProjectorSequence.identity(10, 8, 2)
    assert np.array_equal(projected_wick(CameronMartinFn.constant([0, 0], B.grid), P, B), np.ones(10))


def _ones_on_simplex(n_steps, order):
    return SimplexKernel(simplex_mask(n_steps, order).astype(float).reshape((n_steps,) * order + (1,) * order))


def test_iterated_order_one_m1(brownian):
    B = brownian(16, 1, 40)
    f = SimplexKernel(np.ones((16, 1)))
    assert np.allclose(iterated_integral(f, B.increments), B.terminal()[:, 0], atol=1e-13)


def test_iterated_order_two_square_identity(brownian):
    B = brownian(12, 1, 40)
    f = _ones_on_simplex(12, 2)
    dB = B.increments[:, :, 0]
    expect = 0.5 * (dB.sum(axis=1) ** 2 - (dB ** 2).sum(axis=1))
    assert np.allclose(iterated_integral(f, B.increments), expect, atol=1e-12)


@pytest.mark.parametrize("order", [1, 2, 3])
def test_iterated_zero_kernel(brownian, order):
    B = brownian(6, 2, 10)
    f = SimplexKernel(np.zeros((6,) * order + (2,) * order))
    assert np.array_equal(iterated_integral(f, B.increments), np.zeros(10))


def test_iterated_order_too_high(brownian):
    B = brownian(4, 1, 3)
    f = SimplexKernel(np.zeros((4,) * 3 + (1,) * 3))
    with pytest.raises(InvalidArgumentError):
        iterated_integral(f, B.increments, max_order=2)


@given(st.integers(0, 2**32 - 1), st.integers(2, 10))
def test_order_two_identity_any_increments(seed, n_steps):
    dB = np.random.default_rng(seed).standard_normal((5, n_steps, 1))
    f = _ones_on_simplex(n_steps, 2)
    expect = 0.5 * (dB.sum(axis=(1, 2)) ** 2 - (dB ** 2).sum(axis=(1, 2)))
    assert np.allclose(iterated_integral(f, dB), expect, atol=1e-10)


@given(st.integers(0, 2**32 - 1), st.integers(1, 3))
def test_block_kernel_agrees_with_dense(seed, order):
    g = np.random.default_rng(seed)
    n_steps, d, n_blocks = 6, 2, 3
    edges = block_edges(n_steps, n_blocks)
    labels = simplex_index(n_blocks, d, order)
    coeffs = {lab: float(g.standard_normal()) for lab in labels}
    blocked = SimplexKernel.from_blocks(coeffs, edges, n_steps, d, order)
    dense = SimplexKernel(blocked.coeffs)
    dm = g.standard_normal((4, n_steps, d))
    assert np.allclose(iterated_integral(blocked, dm), iterated_integral(dense, dm), atol=1e-10)


def test_block_features_order_one_are_block_sums(brownian):
    B = brownian(8, 2, 6)
    feats, labels = block_iterated_features(B.increments, block_edges(8, 4), 1)
    for col, ((blk,), (j,)) in enumerate(labels[0]):
        expect = B.increments[:, 2 * blk:2 * blk + 2, j].sum(axis=1)
        assert np.allclose(feats[0][:, col], expect)


def test_kernel_json_round_trip(tmp_path):
    mask = simplex_mask(5, 2)[:, :, None, None]
    f = SimplexKernel(np.random.default_rng(0).standard_normal((5, 5, 2, 2)) * mask)
    path = tmp_path / "k.json"
    f.save(path)
    g = SimplexKernel.load(path)
    assert np.array_equal(f.coeffs, g.coeffs)
    with pytest.raises(InvalidArgumentError):
        SimplexKernel.from_json('{"order": 2}')


def test_kernel_off_simplex_rejected():
    with pytest.raises(InvalidArgumentError):
        SimplexKernel(np.ones((3, 3, 1, 1)))
