from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import adjusted_rand_score

from dlaim.evaluation import (ScoredPairs, UndefinedAUCError, auc, bas_baseline, community_detect,
                              evaluate_forecast, score_matrix)
from dlaim.model import (Hyperparams, SnapshotSequence, expand_interaction_matrix, logit_matrix,
                         probability_matrix, sample_network)


def brute_force_auc(scores, labels):
    pos = [s for s, y in zip(scores, labels) if y == 1]
    neg = [s for s, y in zip(scores, labels) if y == 0]
    total = 0.0
    for p in pos:
        for n in neg:
            total += 1.0 if p > n else 0.5 if p == n else 0.0
    return total / (len(pos) * len(neg))


def test_auc_examples():
    assert auc([0.9, 0.8, 0.3], [1, 0, 1]) == 0.5
    assert auc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0
    assert auc([0.4] * 6, [1, 0, 1, 0, 0, 1]) == 0.5
    assert auc(ScoredPairs(np.arange(3), np.array([0.1, 0.2, 0.3]), np.array([0, 0, 1]))) == 1.0


def test_auc_single_class_is_undefined():
    with pytest.raises(UndefinedAUCError):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(UndefinedAUCError):
        auc([0.1, 0.2], [0, 0])
    with pytest.raises(ValueError):
        auc([0.1, 0.2], [0, 1, 1])


def test_auc_matches_brute_force():
    rng = np.random.default_rng(0)
    for _ in range(100):
        n = rng.integers(2, 60)
        # coarse rounding forces ties
        scores = np.round(rng.uniform(size=n), rng.integers(1, 4))
        labels = rng.integers(0, 2, size=n)
        labels[0], labels[1] = 0, 1
        assert abs(auc(scores, labels) - brute_force_auc(scores, labels)) < 1e-12


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.integers(-500, 500), st.integers(0, 1)), min_size=2, max_size=40))
def test_auc_invariant_to_increasing_transform(data):
    # integer grid keeps the transforms strictly increasing in floating point
    scores = np.array([s for s, _ in data], dtype=float) / 10
    labels = np.array([y for _, y in data])
    if labels.min() == labels.max():
        return
    base = auc(scores, labels)
    assert auc(scores * 3 + 1, labels) == base
    assert auc(np.exp(scores / 10), labels) == base
    assert auc(np.arctan(scores), labels) == base


def test_bas_exact_rationals():
    A = np.zeros((10, 3, 3), dtype=int)
    A[:, 0, 1] = A[:, 1, 0] = 1
    A[:3, 0, 2] = A[:3, 2, 0] = 1
    P = bas_baseline(SnapshotSequence(A))
    assert Fraction(P[0, 1]).limit_denominator(100) == Fraction(11, 12)
    assert Fraction(P[0, 2]).limit_denominator(100) == Fraction(4, 12)
    assert Fraction(P[1, 2]).limit_denominator(100) == Fraction(1, 12)
    assert np.all(np.diag(P) == 0)
    B = np.zeros((4, 2, 2), dtype=int)
    B[[0, 1, 3], 0, 1] = 1
    assert bas_baseline(SnapshotSequence(B, directed=True))[0, 1] == pytest.approx(4 / 6, abs=0)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 12), st.integers(0, 2**31))
def test_bas_entries_in_open_interval(T, seed):
    rng = np.random.default_rng(seed)
    A = rng.integers(0, 2, size=(T, 5, 5))
    A = np.triu(A, 1)
    A = A + A.transpose(0, 2, 1)
    P = bas_baseline(SnapshotSequence(A))
    off = ~np.eye(5, dtype=bool)
    assert np.all((P[off] > 0) & (P[off] < 1))
    np.testing.assert_allclose(P[off] * (T + 2), A.sum(axis=0)[off] + 1, atol=1e-12)


def test_evaluate_forecast():
    hp = Hyperparams(2)
    seq, _ = sample_network(hp, 12, 1, seed=3)
    A = seq[0]
    assert evaluate_forecast(A.astype(float), A) == 1.0
    assert evaluate_forecast(np.full((12, 12), 0.3), A) == 0.5
    with pytest.raises(ValueError):
        evaluate_forecast(np.zeros((3, 3)), A)


def test_evaluate_forecast_pair_sets():
    A = np.zeros((3, 3), dtype=int)
    A[0, 1] = 1
    P = np.zeros((3, 3))
    P[1, 0] = 1.0  # wrong direction
    assert evaluate_forecast(P, A, directed=True) == pytest.approx(brute_force_auc(
        [P[i, j] for i in range(3) for j in range(3) if i != j],
        [A[i, j] for i in range(3) for j in range(3) if i != j]))
    # undirected reads the upper triangle only
    assert evaluate_forecast(P.T, A, directed=False) == 1.0


def test_bas_beats_chance_on_stationary_network():
    hp = Hyperparams.from_std(3, s_theta=1e-3, s_psi=1e-3, sigma_theta=3.0, sigma_psi=3.0)
    seq, _ = sample_network(hp, 30, 11, seed=5)
    P = bas_baseline(seq.head(10))
    assert evaluate_forecast(P, seq[10]) > 0.5


def test_score_matrix():
    rng = np.random.default_rng(6)
    z = rng.uniform(size=(6, 3))
    assert np.all(score_matrix(z, np.zeros((3, 2, 2))) == 0)
    theta = expand_interaction_matrix(rng.normal(size=(3, 3)), False)
    S = score_matrix(z, theta)
    assert np.array_equal(S, S.T)
    P = probability_matrix(z, theta)
    off = ~np.eye(6, dtype=bool)
    np.testing.assert_allclose(S[off], np.log(P[off] / (1 - P[off])), atol=1e-10)
    assert np.diag(S) == pytest.approx(np.full(6, logit_matrix(z, theta)[off].mean()))


def planted(n_per=5, groups=2, strength=8.0):
    n = n_per * groups
    truth = np.repeat(np.arange(groups), n_per)
    S = np.where(truth[:, None] == truth[None, :], strength, -strength)
    return S.astype(float), truth


def test_planted_partition_recovered():
    S, truth = planted()
    result = community_detect(S, 2, seed=0, timestep=4)
    assert adjusted_rand_score(truth, result.labels) == 1.0
    assert result.timestep == 4 and result.n_clusters == 2
    S3, truth3 = planted(6, 3)
    assert adjusted_rand_score(truth3, community_detect(S3, 3, seed=1).labels) == 1.0


def test_constant_shift_leaves_assignment_unchanged():
    rng = np.random.default_rng(7)
    S = rng.normal(size=(12, 12))
    S = S + S.T
    a = community_detect(S, 3, seed=2).labels
    b = community_detect(S + 5.0, 3, seed=2).labels
    np.testing.assert_array_equal(a, b)


def test_permutation_equivariance():
    S, truth = planted(4, 3, strength=5.0)
    perm = np.random.default_rng(8).permutation(len(truth))
    a = community_detect(S, 3, seed=0).labels
    b = community_detect(S[np.ix_(perm, perm)], 3, seed=0).labels
    assert adjusted_rand_score(a[perm], b) == 1.0


def test_one_cluster_per_node():
    S, _ = planted(3, 2)
    labels = community_detect(S, 6, seed=0).labels
    assert len(labels) == 6 and set(labels) <= set(range(6))


def test_community_detect_rejects_bad_cluster_count():
    S, _ = planted()
    with pytest.raises(ValueError):
        community_detect(S, 1)
    with pytest.raises(ValueError):
        community_detect(S, 11)
    with pytest.raises(ValueError):
        community_detect(np.zeros((3, 4)), 2)
