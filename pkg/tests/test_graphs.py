from collections import deque
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from admnash.checks import power_norm
from admnash.graphs import (
    CommGraph, GraphError, MixingMatrix, generate_named, generate_tree, lazy_laplacian_weights,
    metropolis_weights, mix, second_singular_value,
)


def bfs_connected(n, edges):
    adj = {v: set() for v in range(n)}
    for i, j in edges:
        adj[i].add(j)
        adj[j].add(i)
    seen, todo = {0}, deque([0])
    while todo:
        for w in adj[todo.popleft()] - seen:
            seen.add(w)
            todo.append(w)
    return len(seen) == n


def test_tree_small_cases():
    assert generate_tree(1, 0).edges == frozenset()
    assert generate_tree(2, 0).edges == {(0, 1)}
    with pytest.raises(GraphError):
        generate_tree(0, 0)


def test_tree_twenty_nodes():
    g = generate_tree(20, 7)
    assert len(g.edges) == 19
    assert bfs_connected(20, g.edges)


@settings(deadline=None, max_examples=50)
@given(n=st.integers(1, 60), seed=st.integers(0, 2**32 - 1))
def test_tree_properties(n, seed):
    g = generate_tree(n, seed)
    assert len(g.edges) == n - 1
    assert bfs_connected(n, g.edges)
    assert generate_tree(n, seed) == g


def test_tree_is_uniform_on_four_nodes():
    # 4^(4-2) = 16 labeled trees, each should appear ~1/16 of the time
    rng = np.random.default_rng(0)
    counts = {}
    draws = 16_000
    for _ in range(draws):
        key = tuple(sorted(generate_tree(4, rng).edges))
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 16
    assert max(abs(c - draws / 16) for c in counts.values()) < 0.15 * draws / 16


def test_named_graphs():
    assert generate_named("complete", 3).edges == {(0, 1), (0, 2), (1, 2)}
    assert generate_named("path", 3).edges == {(0, 1), (1, 2)}
    assert generate_named("ring", 4).edges == {(0, 1), (1, 2), (2, 3), (0, 3)}
    with pytest.raises(GraphError):
        generate_named("ring", 2)
    with pytest.raises(GraphError):
        generate_named("star", 4)


def test_graph_validation():
    with pytest.raises(GraphError, match="connected"):
        CommGraph(3, frozenset({(0, 1)}))
    with pytest.raises(GraphError, match="self-loop"):
        CommGraph(2, frozenset({(0, 0), (0, 1)}))
    with pytest.raises(GraphError):
        CommGraph(2, frozenset({(0, 2)}))


def test_graph_roundtrip():
    g = generate_tree(9, 3)
    back = CommGraph.loads(g.dumps())
    assert back == g and back.seed == 3 and back.kind == "tree"


def test_metropolis_two_nodes():
    W = metropolis_weights(generate_tree(2, 0))
    np.testing.assert_array_equal(W.W, [[0.5, 0.5], [0.5, 0.5]])
    # eigenvalues {1, 0}
    assert W.sigma == pytest.approx(0, abs=1e-15)
    assert W.norm_i_minus_w == pytest.approx(1, rel=1e-14)


def test_metropolis_path_three():
    W = metropolis_weights(generate_named("path", 3))
    expected = np.array([[2, 1, 0], [1, 1, 1], [0, 1, 2]]) / 3
    np.testing.assert_allclose(W.W, expected, atol=1e-16)
    # 3W has characteristic polynomial l (l - 2)(l - 3)
    assert W.sigma == pytest.approx(2 / 3, rel=1e-14)
    assert W.norm_i_minus_w == pytest.approx(1, rel=1e-14)


def test_metropolis_complete_three():
    W = metropolis_weights(generate_named("complete", 3))
    np.testing.assert_allclose(W.W, np.full((3, 3), 1 / 3), atol=1e-16)
    assert W.sigma == pytest.approx(0, abs=1e-15)
    assert W.norm_i_minus_w == pytest.approx(1, rel=1e-14)


def test_metropolis_exact_rationals():
    # compare against an exact construction with Fractions
    g = generate_tree(12, 4)
    deg = g.degrees()
    exact = [[Fraction(0)] * g.n for _ in range(g.n)]
    for i, j in g.edges:
        exact[i][j] = exact[j][i] = Fraction(1, 1 + int(max(deg[i], deg[j])))
    for i in range(g.n):
        exact[i][i] = 1 - sum(exact[i])
    W = metropolis_weights(g).W
    np.testing.assert_allclose(W, np.array(exact, dtype=float), atol=2e-16)


def test_mixing_matrix_invariants():
    for g in [generate_tree(15, s) for s in range(5)] + [generate_named("ring", 6)]:
        W = metropolis_weights(g)
        Wm = W.W
        assert np.array_equal(Wm, Wm.T)
        assert np.all(Wm >= 0)
        np.testing.assert_allclose(Wm @ np.ones(g.n), 1, atol=1e-12, rtol=0)
        support = {(i, j) for i in range(g.n) for j in range(g.n) if i != j and Wm[i, j] > 0}
        assert support == g.edges | {(j, i) for i, j in g.edges}
        assert np.all(np.diag(Wm) > 0)
        assert 0 < W.sigma < 1 - 1e-12
        assert 0 < W.norm_i_minus_w <= 2


def test_mixing_matrix_rejects_bad_input():
    with pytest.raises(GraphError):
        MixingMatrix(np.array([[0.5, 0.5], [0.4, 0.6]]))
    with pytest.raises(GraphError):
        MixingMatrix(np.array([[0.5, 0.6], [0.6, 0.5]]))
    with pytest.raises(GraphError):
        MixingMatrix(np.array([[1.5, -0.5], [-0.5, 1.5]]))


def test_lazy_laplacian_variant():
    W = lazy_laplacian_weights(generate_named("path", 4))
    np.testing.assert_allclose(W.W.sum(axis=1), 1, atol=1e-15)
    assert 0 < W.sigma < 1


def test_mix_examples(rng):
    W = metropolis_weights(generate_tree(2, 0))
    np.testing.assert_array_equal(mix(W, [[1, 2], [3, 4]]), [[2, 3], [2, 3]])
    W = metropolis_weights(generate_tree(10, 1))
    X = np.tile(rng.standard_normal(10), (10, 1))
    np.testing.assert_allclose(mix(W, X), X, rtol=1e-15, atol=1e-15)
    X = rng.standard_normal((10, 10))
    np.testing.assert_allclose(mix(W, X).mean(axis=0), X.mean(axis=0), atol=1e-12, rtol=0)
    with pytest.raises(GraphError):
        mix(W, np.zeros((3, 10)))


def test_second_singular_value():
    assert second_singular_value(np.eye(1)) == 0
    assert second_singular_value(metropolis_weights(generate_named("path", 3))) == pytest.approx(2 / 3)
    assert second_singular_value(metropolis_weights(generate_named("complete", 3))) == pytest.approx(0, abs=1e-15)
    with pytest.raises(GraphError):
        second_singular_value(np.array([[0.5, 0.5], [0.2, 0.8]]))


def test_sigma_equals_svd(rng):
    for s in range(5):
        W = metropolis_weights(generate_tree(13, s))
        sv = np.linalg.svd(W.W, compute_uv=False)
        assert W.sigma == pytest.approx(sv[1], rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_averaging_contraction(seed):
    rng = np.random.default_rng(seed)
    W = metropolis_weights(generate_tree(int(rng.integers(2, 30)), rng))
    X = rng.standard_normal((W.n, 1000))
    xbar = X.mean(axis=0)
    lhs = np.linalg.norm(W.W @ X - xbar, axis=0)
    rhs = W.sigma * np.linalg.norm(X - xbar, axis=0)
    assert np.all(lhs <= rhs * (1 + 1e-12))


@pytest.mark.parametrize("seed", range(5))
def test_norm_i_minus_w_power_iteration(seed):
    rng = np.random.default_rng(seed)
    W = metropolis_weights(generate_tree(int(rng.integers(2, 30)), rng))
    eig = np.linalg.eigvalsh(W.W)
    assert W.norm_i_minus_w == pytest.approx(np.max(np.abs(1 - eig)), rel=1e-14)
    assert abs(power_norm(np.eye(W.n) - W.W, rng) - W.norm_i_minus_w) <= 1e-9
