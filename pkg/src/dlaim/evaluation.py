"""Link-forecast scoring, the Beta-Bernoulli baseline and community detection."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata
from sklearn.cluster import KMeans

from .model import SnapshotSequence, logit_matrix

__all__ = [
    "UndefinedAUCError",
    "ScoredPairs",
    "CommunityAssignment",
    "auc",
    "bas_baseline",
    "candidate_pairs",
    "evaluate_forecast",
    "score_matrix",
    "community_detect",
]


class UndefinedAUCError(ValueError):
    """AUC needs at least one positive and one negative label."""


@dataclass
class ScoredPairs:
    pairs: np.ndarray
    scores: np.ndarray
    labels: np.ndarray


@dataclass
class CommunityAssignment:
    labels: np.ndarray
    timestep: int
    n_clusters: int


def auc(scores, labels=None) -> float:
    """Area under the ROC curve via the Mann-Whitney statistic.

    Ties between a positive and a negative score count one half.
    ``scores`` may be a :class:`ScoredPairs`, in which case ``labels`` is
    taken from it.

    Raises
    ------
    UndefinedAUCError
        If ``labels`` contains only one class.
    """
    if isinstance(scores, ScoredPairs):
        scores, labels = scores.scores, scores.labels
    s = np.asarray(scores, dtype=float).ravel()
    y = np.asarray(labels).ravel()
    if s.shape != y.shape:
        raise ValueError(f"{s.size} scores for {y.size} labels")
    pos = y == 1
    n_pos = int(pos.sum())
    n_neg = s.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise UndefinedAUCError(f"AUC undefined with {n_pos} positives and {n_neg} negatives")
    ranks = rankdata(s)
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


def bas_baseline(snapshots: SnapshotSequence) -> np.ndarray:
    """Posterior-mean edge probabilities under a Beta(1, 1) prior.

    Entry ``(i, j)`` is ``(count + 1) / (T + 2)`` where ``count`` is the
    number of observed snapshots containing the edge.  Diagonal is zero.
    """
    A = snapshots.adjacency
    T = A.shape[0]
    P = (A.sum(axis=0, dtype=float) + 1.0) / (T + 2.0)
    np.fill_diagonal(P, 0.0)
    return P


def candidate_pairs(n, directed):
    """Row/column indices of ordered ``i != j`` or unordered ``i < j`` pairs."""
    if directed:
        mask = ~np.eye(n, dtype=bool)
    else:
        mask = np.triu(np.ones((n, n), dtype=bool), k=1)
    return np.nonzero(mask)


def evaluate_forecast(prob_matrix, truth, directed=False) -> float:
    """AUC of a predicted probability matrix against one observed snapshot."""
    P = np.asarray(prob_matrix, dtype=float)
    A = np.asarray(truth)
    if P.shape != A.shape or P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError(f"shape mismatch: prediction {P.shape}, truth {A.shape}")
    rows, cols = candidate_pairs(P.shape[0], directed)
    return auc(P[rows, cols], A[rows, cols])


def score_matrix(z, theta) -> np.ndarray:
    """Matrix of edge logits with the diagonal set to the off-diagonal mean."""
    S = logit_matrix(z, theta)
    off = ~np.eye(S.shape[0], dtype=bool)
    np.fill_diagonal(S, S[off].mean())
    return S


def community_detect(A_tilde, n_clusters, seed=None, timestep=0, n_init=20) -> CommunityAssignment:
    """Spectral clustering of a logit matrix.

    The off-diagonal mean is subtracted, entries are exponentiated and
    symmetrized into an affinity ``W``, and the rows of the bottom
    ``n_clusters`` eigenvectors of ``I - D^-1/2 W D^-1/2`` (normalized to
    unit length) are clustered with k-means.
    """
    S = np.asarray(A_tilde, dtype=float)
    n = S.shape[0]
    if S.ndim != 2 or S.shape[1] != n:
        raise ValueError(f"expected a square matrix, got {S.shape}")
    if not 2 <= n_clusters <= n:
        raise ValueError(f"need 2 <= n_clusters <= {n}, got {n_clusters}")
    off = ~np.eye(n, dtype=bool)
    S = S - S[off].mean()
    np.fill_diagonal(S, 0.0)
    W = np.exp(S)
    W = 0.5 * (W + W.T)
    inv_sqrt = 1.0 / np.sqrt(W.sum(axis=1))
    L = np.eye(n) - inv_sqrt[:, None] * W * inv_sqrt[None, :]
    try:
        _, vecs = np.linalg.eigh(L)
    except np.linalg.LinAlgError as exc:
        raise RuntimeError(f"eigensolver did not converge: {exc}") from exc
    U = vecs[:, :n_clusters]
    U = U / np.linalg.norm(U, axis=1, keepdims=True)
    km = KMeans(n_clusters=n_clusters, n_init=n_init, random_state=seed).fit(U)
    return CommunityAssignment(km.labels_.astype(int), timestep, n_clusters)
