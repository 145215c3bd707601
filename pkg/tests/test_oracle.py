import numpy as np
import pytest

from gbp.errors import ValidationError
from gbp.graph import degree_power
from gbp.oracle import exact_propagate, exact_transition_rows
from gbp.synthetic import erdos_renyi


def dense_adjacency(g):
    A = np.zeros((g.node_count, g.node_count))
    for u in range(g.node_count):
        A[u, g.neighbors_of(u)] = 1.0
    return A


def test_pair_symmetric_step(pair):
    out = exact_propagate(pair, np.array([[1.0], [0.0]]), 1, 0.5, [0.0, 1.0])
    assert np.allclose(out.levels[1][:, 0], [0.5, 0.5], atol=1e-15)


def test_level_zero_is_identity(er_graph):
    x = np.random.default_rng(0).random((60, 2))
    out = exact_propagate(er_graph, x, 0, 0.5, [1.0])
    assert np.array_equal(out.P, x)


@pytest.mark.parametrize("r", [0.0, 1.0])
def test_pair_regular_graph_same_for_r0_and_r1(pair, r):
    out = exact_propagate(pair, np.array([[1.0], [0.0]]), 1, r, [0.0, 1.0])
    assert np.allclose(out.levels[1][:, 0], [0.5, 0.5], atol=1e-15)


def test_transition_rows_examples(pair, triangle):
    rows = exact_transition_rows(pair, [0, 1], 1)
    assert np.array_equal(rows[0], np.eye(2))
    assert np.allclose(rows[1], 0.5)
    rows = exact_transition_rows(triangle, [0], 1)
    assert np.allclose(rows[1][0], [1 / 3] * 3)


@pytest.mark.parametrize("seed", range(5))
def test_transition_rows_stochastic(seed):
    g = erdos_renyi(50, 5, np.random.default_rng(seed))
    rows = exact_transition_rows(g, np.arange(50), 6)
    assert np.allclose(rows.sum(axis=2), 1.0, atol=1e-12)
    # matches dense matrix powers
    A = dense_adjacency(g)
    M = A / A.sum(axis=1, keepdims=True)
    assert np.allclose(rows[3], np.linalg.matrix_power(M, 3), atol=1e-14)


@pytest.mark.parametrize("seed", range(5))
@pytest.mark.parametrize("r", [0.0, 0.3, 0.5, 1.0])
def test_similarity_identity(seed, r):
    # (D^{r-1} A D^{-r})^l == D^r (D^{-1}A)^l D^{-r}
    g = erdos_renyi(50, 5, np.random.default_rng(100 + seed))
    A = dense_adjacency(g)
    d = A.sum(axis=1)
    M = np.diag(d ** (r - 1)) @ A @ np.diag(d ** -r)
    T = A / d[:, None]
    for level in range(7):
        lhs = np.linalg.matrix_power(M, level)
        rhs = np.diag(d ** r) @ np.linalg.matrix_power(T, level) @ np.diag(d ** -r)
        assert np.allclose(lhs, rhs, rtol=1e-10, atol=1e-13)
        # and the oracle's sparse route agrees with the dense power
        x = np.eye(50)[:, :4]
        out = exact_propagate(g, x, level, r, [0.0] * level + [1.0])
        assert np.allclose(out.P, lhs @ x, atol=1e-13)


def test_oracle_cap(pair):
    with pytest.raises(ValidationError):
        exact_propagate(pair, np.ones((2, 1)), 1, 0.5, [0.5, 0.5], cap=1)


def test_degree_power_matches_dense(er_graph):
    d = dense_adjacency(er_graph).sum(axis=1)
    assert np.allclose(degree_power(er_graph, -0.5), d ** -0.5)
