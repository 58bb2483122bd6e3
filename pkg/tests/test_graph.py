import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from ragcn.graph import ConfigurationError, build_threshold_graph, class_subgraph, density, normalize, spectral_radius
from ragcn.ndmath import DomainError


def random_adjacency(rng, n, p=0.3):
    upper = np.triu(rng.random((n, n)) < p, 1)
    return (upper | upper.T).astype(float)


class TestThresholdGraph:
    def test_gamma_zero_is_empty(self):
        x = np.random.default_rng(0).normal(size=(6, 3))
        for metric in ("absolute-difference", "euclidean", "cosine"):
            assert build_threshold_graph(x, metric, 0.0).sum() == 0

    def test_scalar_features_single_edge(self):
        a = build_threshold_graph([1.0, 2.0, 10.0], "absolute-difference", 2.0)
        expected = np.zeros((3, 3))
        expected[0, 1] = expected[1, 0] = 1
        assert np.array_equal(a, expected)

    def test_strict_inequality(self):
        a = build_threshold_graph([0.0, 2.0], "absolute-difference", 2.0)
        assert a.sum() == 0

    def test_identical_vectors_cosine_complete(self):
        x = np.tile([[0.3, -1.0, 2.0]], (5, 1))
        a = build_threshold_graph(x, "cosine", 0.5)
        assert np.array_equal(a, np.ones((5, 5)) - np.eye(5))

    def test_cosine_matches_hand_formula(self):
        x = np.array([[1.0, 0.0], [1.0, 1.0], [-1.0, 0.0]])
        # distances: 1-1/sqrt2 ~ 0.293, 2, 1+1/sqrt2 ~ 1.707
        a = build_threshold_graph(x, "cosine", 0.3)
        assert a[0, 1] == 1 and a[0, 2] == 0 and a[1, 2] == 0
        a = build_threshold_graph(x, "cosine", 1.8)
        assert a[1, 2] == 1 and a[0, 2] == 0

    def test_errors(self):
        with pytest.raises(DomainError):
            build_threshold_graph([[0.0, 0.0], [1.0, 0.0]], "cosine", 0.5)
        with pytest.raises(ValueError):
            build_threshold_graph([1.0, 2.0], "absolute-difference", -0.1)
        with pytest.raises(ValueError):
            build_threshold_graph([1.0, 2.0], "manhattan", 1.0)

    @settings(max_examples=40)
    @given(st.integers(0, 10_000))
    def test_monotone_in_gamma(self, seed):
        x = np.random.default_rng(seed).normal(size=(15, 4))
        prev = None
        for gamma in np.arange(1, 10) / 10:
            a = build_threshold_graph(x, "cosine", gamma)
            assert np.array_equal(a, a.T) and not a.diagonal().any()
            if prev is not None:
                assert np.all(a >= prev)
            prev = a


class TestNormalize:
    def test_isolated_node(self):
        assert normalize(np.zeros((1, 1))).tolist() == [[1.0]]

    def test_two_connected(self):
        assert np.allclose(normalize(np.array([[0.0, 1.0], [1.0, 0.0]])), 0.5)

    def test_path_hand_values(self):
        a = np.array([[0, 1, 0], [1, 0, 1], [0, 1, 0]], dtype=float)
        s2, s3 = 1 / 2, 1 / np.sqrt(6)
        expected = np.array([[s2, s3, 0], [s3, 1 / 3, s3], [0, s3, s2]])
        assert np.allclose(normalize(a), expected, atol=1e-15)

    @settings(max_examples=50)
    @given(st.integers(1, 25), st.integers(0, 10_000), st.floats(0.0, 1.0))
    def test_properties(self, n, seed, p):
        a = random_adjacency(np.random.default_rng(seed), n, p)
        m = normalize(a)
        assert np.array_equal(m, m.T)
        assert np.all(m.diagonal() > 0)
        assert spectral_radius(m) <= 1 + 1e-9
        assert np.array_equal(m, normalize(a.copy()))


class TestClassSubgraph:
    def test_path_restriction(self):
        a = np.zeros((4, 4))
        for i in range(3):
            a[i, i + 1] = a[i + 1, i] = 1
        idx, sub = class_subgraph(a, [0, 1, 0, 1], [True] * 4, 0)
        assert idx.tolist() == [0, 2]
        assert np.array_equal(sub, np.zeros((2, 2)))

    def test_complete_and_singleton(self):
        a = np.ones((5, 5)) - np.eye(5)
        idx, sub = class_subgraph(a, [0, 0, 0, 1, 1], [True, True, True, True, False], 0)
        assert np.array_equal(sub, np.ones((3, 3)) - np.eye(3))
        idx, sub = class_subgraph(a, [0, 0, 0, 1, 1], [True, True, True, True, False], 1)
        assert idx.tolist() == [3] and sub.shape == (1, 1) and sub[0, 0] == 0

    def test_empty_class_names_it(self):
        with pytest.raises(ConfigurationError, match="class 2"):
            class_subgraph(np.zeros((3, 3)), [0, 1, 2], [True, True, False], 2)

    @settings(max_examples=30)
    @given(st.integers(0, 10_000))
    def test_partitions_training_edges(self, seed):
        rng = np.random.default_rng(seed)
        n = 20
        a = random_adjacency(rng, n, 0.4)
        labels = rng.integers(0, 3, size=n)
        labels[:3] = [0, 1, 2]
        train = rng.random(n) < 0.7
        train[:3] = True
        seen = np.zeros((n, n))
        for c in range(3):
            idx, sub = class_subgraph(a, labels, train, c)
            assert np.all(labels[idx] == c) and np.all(train[idx])
            seen[np.ix_(idx, idx)] += sub
        assert seen.max() <= 1
        same = (labels[:, None] == labels[None, :]) & train[:, None] & train[None, :]
        assert np.array_equal(seen, a * same)


class TestDensity:
    def test_extremes(self):
        assert density(np.zeros((4, 4))) == 0.0
        assert density(np.ones((4, 4)) - np.eye(4)) == 1.0

    def test_small_graph(self):
        with pytest.raises(ValueError):
            density(np.zeros((1, 1)))

    @given(arrays(np.bool_, (6, 6)))
    def test_matches_count(self, m):
        a = np.triu(m, 1)
        a = (a | a.T).astype(float)
        assert density(a) == pytest.approx(a.sum() / 30)
