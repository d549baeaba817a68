import itertools

import numpy as np
import pytest
from oracles import pearson_ref

from stgcnn.smoothness import greedy_graph, laplacian, normalized_covariance, smoothness_value


def trace_cl_ref(A, Cn):
    """tr(C L) by explicit loops."""
    F = len(A)
    L = [[(sum(A[i]) if i == j else 0.0) - A[i][j] for j in range(F)] for i in range(F)]
    return sum(Cn[i][k] * L[k][i] for i in range(F) for k in range(F))


def test_orthogonal_rows_give_identity():
    X = np.array([[1.0, -1.0, 1.0, -1.0], [1.0, 1.0, -1.0, -1.0]])
    np.testing.assert_allclose(normalized_covariance(X), np.eye(2), atol=1e-15)


def test_duplicated_row():
    X = np.array([[1.0, 4.0, 2.0], [1.0, 4.0, 2.0], [0.0, 1.0, 5.0]])
    assert normalized_covariance(X)[0, 1] == pytest.approx(1.0, abs=1e-14)


def test_matches_pearson_entrywise():
    rng = np.random.default_rng(1)
    X = rng.normal(size=(3, 10))
    Cn = normalized_covariance(X)
    for i, j in itertools.product(range(3), repeat=2):
        assert Cn[i, j] == pytest.approx(pearson_ref(list(X[i]), list(X[j])), abs=1e-12)


def test_constant_row():
    Cn = normalized_covariance(np.array([[2.0, 2.0, 2.0], [1.0, 0.0, 3.0]]))
    np.testing.assert_array_equal(Cn, np.eye(2))


def test_smoothness_examples():
    rng = np.random.default_rng(2)
    Cn = normalized_covariance(rng.normal(size=(4, 9)))
    assert smoothness_value(np.zeros((4, 4)), Cn) == 0.0
    A = np.array([[0, 1, 0, 2], [1, 0, 1, 0], [0, 1, 0, 0], [2, 0, 0, 0]], dtype=float)
    assert smoothness_value(A, np.eye(4)) == pytest.approx(A.sum())
    w, c = 0.7, 0.3
    A2 = np.array([[0, w], [w, 0]])
    C2 = np.array([[1, c], [c, 1]])
    assert smoothness_value(A2, C2) == pytest.approx(2 * w * (1 - c), abs=1e-15)


def test_smoothness_matches_loop_oracle():
    rng = np.random.default_rng(3)
    for _ in range(20):
        F = int(rng.integers(2, 7))
        Cn = normalized_covariance(rng.normal(size=(F, 12)))
        A = np.triu(rng.random((F, F)) * (rng.random((F, F)) < 0.5), 1)
        A = A + A.T
        assert smoothness_value(A, Cn) == pytest.approx(trace_cl_ref(A.tolist(), Cn.tolist()), abs=1e-12)


def test_smoothness_rejects_asymmetric():
    with pytest.raises(ValueError, match="symmetric"):
        smoothness_value(np.array([[0, 1.0], [0, 0]]), np.eye(2))


def test_laplacian_rows_sum_to_zero():
    A = np.array([[0, 1, 2], [1, 0, 0], [2, 0, 0]], dtype=float)
    np.testing.assert_array_equal(laplacian(A).sum(axis=1), 0)


def test_greedy_extremes():
    Cn = normalized_covariance(np.random.default_rng(4).normal(size=(5, 8)))
    full = greedy_graph(Cn, 10)
    np.testing.assert_array_equal(full, np.ones((5, 5)) - np.eye(5))
    np.testing.assert_array_equal(greedy_graph(Cn, 0), np.zeros((5, 5)))


def test_greedy_target_out_of_range():
    with pytest.raises(ValueError):
        greedy_graph(np.eye(3), 4)


def test_greedy_tie_goes_to_lowest_pair():
    _, removed = greedy_graph(np.eye(4), 3, return_trace=True)
    assert removed == [(0, 1), (0, 2), (0, 3)]


def greedy_steps_match_exhaustive(Cn):
    """Replay the greedy trace, checking each removal against brute force."""
    F = Cn.shape[0]
    _, removed = greedy_graph(Cn, 0, return_trace=True)
    A = np.ones((F, F)) - np.eye(F)
    current = trace_cl_ref(A.tolist(), Cn.tolist())
    for i, j in removed:
        best, best_edge = None, None
        for a, b in itertools.combinations(range(F), 2):
            if A[a, b] == 0:
                continue
            B = A.copy()
            B[a, b] = B[b, a] = 0
            val = trace_cl_ref(B.tolist(), Cn.tolist())
            if best is None or val < best - 1e-12:
                best, best_edge = val, (a, b)
        A[i, j] = A[j, i] = 0
        chosen = trace_cl_ref(A.tolist(), Cn.tolist())
        # a different edge is acceptable only as an exact tie in objective
        assert (i, j) == best_edge or chosen == pytest.approx(best, abs=1e-12)
        assert chosen == pytest.approx(best, abs=1e-12)
        assert chosen <= current + 1e-12
        current = chosen


def test_greedy_matches_exhaustive_search():
    rng = np.random.default_rng(5)
    for _ in range(50):
        F = int(rng.integers(2, 7))
        greedy_steps_match_exhaustive(normalized_covariance(rng.normal(size=(F, int(rng.integers(3, 15))))))
