"""Probability model for dynamic networks with evolving latent attributes.

Each node carries ``K`` unconstrained pre-attributes ``psi`` whose sigmoid
gives attribute levels ``z`` in (0, 1).  Each attribute owns a 2x2
interaction matrix.  The logit of an edge ``i -> j`` is the sum over
attributes of the expected interaction entry under independent Bernoulli
draws with probabilities ``z_ik`` and ``z_jk``.  Both ``psi`` and the
flattened interaction matrices follow Gaussian random walks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Hyperparams",
    "SnapshotSequence",
    "LatentTrajectory",
    "theta_dim",
    "sigmoid",
    "attribute_activation",
    "expand_interaction_matrix",
    "flatten_interaction_matrix",
    "pairwise_logit",
    "edge_probability",
    "is_symmetric_theta",
    "logit_matrix",
    "probability_matrix",
    "gaussian_log_density",
    "sample_snapshot",
    "sample_network",
]

LOG_2PI = math.log(2.0 * math.pi)


def theta_dim(directed: bool) -> int:
    """Number of free entries in one interaction matrix."""
    return 4 if directed else 3


@dataclass(frozen=True)
class Hyperparams:
    """Model hyperparameters.

    Variances, not standard deviations: ``s_theta_sq`` and ``s_psi_sq`` are
    the random-walk step variances, ``sigma_theta_sq`` and ``sigma_psi_sq``
    the variances of the first-timestep priors.
    """

    K: int
    s_theta_sq: float = 0.01
    s_psi_sq: float = 0.01
    sigma_theta_sq: float = 100.0
    sigma_psi_sq: float = 100.0
    directed: bool = False

    def __post_init__(self):
        if int(self.K) != self.K or self.K < 1:
            raise ValueError(f"K must be a positive integer, got {self.K!r}")
        for name in ("s_theta_sq", "s_psi_sq", "sigma_theta_sq", "sigma_psi_sq"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be a positive finite variance, got {value!r}")

    @property
    def d(self) -> int:
        return theta_dim(self.directed)

    @classmethod
    def from_std(cls, K, s_theta=0.1, s_psi=0.1, sigma_theta=10.0, sigma_psi=10.0,
                 directed=False):
        """Build from standard deviations (the form used on the command line)."""
        return cls(K=K, s_theta_sq=s_theta ** 2, s_psi_sq=s_psi ** 2,
                   sigma_theta_sq=sigma_theta ** 2, sigma_psi_sq=sigma_psi ** 2,
                   directed=directed)


class SnapshotSequence:
    """``T`` binary ``N x N`` adjacency matrices without self-loops.

    Parameters
    ----------
    snapshots : array_like, shape (T, N, N)
        Edge indicators. Anything nonzero counts as an edge.
    directed : bool
        If False every snapshot must be symmetric.
    """

    def __init__(self, snapshots, directed=False):
        A = np.asarray(snapshots)
        if A.ndim != 3 or A.shape[1] != A.shape[2]:
            raise ValueError(f"snapshots must have shape (T, N, N), got {A.shape}")
        if A.shape[0] < 1:
            raise ValueError("snapshot sequence is empty")
        if A.shape[1] < 2:
            raise ValueError("need at least two nodes")
        if not np.isin(A, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        A = A.astype(np.int8)
        if np.any(np.diagonal(A, axis1=1, axis2=2)):
            raise ValueError("self-loops are not allowed")
        if not directed and np.any(A != A.transpose(0, 2, 1)):
            raise ValueError("undirected snapshots must be symmetric")
        A.setflags(write=False)
        self.adjacency = A
        self.directed = bool(directed)
        self.dropped_self_loops = 0

    @property
    def n_nodes(self) -> int:
        return self.adjacency.shape[1]

    @property
    def horizon(self) -> int:
        return self.adjacency.shape[0]

    def __len__(self):
        return self.horizon

    def __getitem__(self, t):
        """Snapshot at 0-based index ``t``."""
        return self.adjacency[t]

    def head(self, T: int) -> "SnapshotSequence":
        """The first ``T`` snapshots."""
        if not 1 <= T <= self.horizon:
            raise ValueError(f"cannot take {T} of {self.horizon} snapshots")
        return SnapshotSequence(self.adjacency[:T], directed=self.directed)

    def __eq__(self, other):
        if not isinstance(other, SnapshotSequence):
            return NotImplemented
        return (self.directed == other.directed
                and self.adjacency.shape == other.adjacency.shape
                and bool(np.all(self.adjacency == other.adjacency)))

    def __repr__(self):
        kind = "directed" if self.directed else "undirected"
        return f"SnapshotSequence(T={self.horizon}, N={self.n_nodes}, {kind})"


@dataclass
class LatentTrajectory:
    """Latent variables over time.

    ``psi`` has shape (T, N, K); ``theta_bar`` has shape (T, K, d) with
    ``d = 4`` for directed and ``d = 3`` for undirected networks.
    """

    psi: np.ndarray
    theta_bar: np.ndarray
    directed: bool = False

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=float)
        self.theta_bar = np.asarray(self.theta_bar, dtype=float)
        if self.theta_bar.shape[-1] != theta_dim(self.directed):
            raise ValueError(
                f"theta_bar last axis is {self.theta_bar.shape[-1]}, "
                f"expected {theta_dim(self.directed)}")
        if self.psi.shape[0] != self.theta_bar.shape[0] or self.psi.shape[2] != self.theta_bar.shape[1]:
            raise ValueError("psi and theta_bar disagree on T or K")

    @property
    def z(self) -> np.ndarray:
        return sigmoid(self.psi)

    @property
    def theta(self) -> np.ndarray:
        """Interaction matrices, shape (T, K, 2, 2)."""
        return expand_interaction_matrix(self.theta_bar, self.directed)


def sigmoid(x):
    """Logistic function, evaluated without overflow for large ``|x|``."""
    x = np.asarray(x, dtype=float)
    e = np.exp(-np.abs(x))
    out = np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return out if out.ndim else float(out)


def attribute_activation(psi):
    """Map pre-attributes to attribute levels in (0, 1)."""
    return sigmoid(psi)


def expand_interaction_matrix(theta_bar, directed: bool):
    """Turn flattened interaction entries into 2x2 matrices.

    Layout of the last axis is row-major ``[(0,0), (0,1), (1,0), (1,1)]``
    when directed and ``[(0,0), (0,1), (1,1)]`` when undirected, in which
    case ``(1,0)`` mirrors ``(0,1)``.  Leading axes are preserved.
    """
    tb = np.asarray(theta_bar, dtype=float)
    d = theta_dim(directed)
    if tb.shape[-1] != d:
        raise ValueError(
            f"{'directed' if directed else 'undirected'} interaction vectors "
            f"need {d} entries, got {tb.shape[-1]}")
    if directed:
        return tb.reshape(tb.shape[:-1] + (2, 2)).copy()
    out = np.empty(tb.shape[:-1] + (2, 2))
    out[..., 0, 0] = tb[..., 0]
    out[..., 0, 1] = tb[..., 1]
    out[..., 1, 0] = tb[..., 1]
    out[..., 1, 1] = tb[..., 2]
    return out


def flatten_interaction_matrix(theta, directed: bool):
    """Inverse of :func:`expand_interaction_matrix`."""
    th = np.asarray(theta, dtype=float)
    if th.shape[-2:] != (2, 2):
        raise ValueError(f"expected trailing 2x2 axes, got {th.shape}")
    if directed:
        return th.reshape(th.shape[:-2] + (4,)).copy()
    if not np.array_equal(th[..., 0, 1], th[..., 1, 0]):
        raise ValueError("undirected interaction matrices must be symmetric")
    return np.stack([th[..., 0, 0], th[..., 0, 1], th[..., 1, 1]], axis=-1)


def pairwise_logit(z_i, z_j, theta) -> float:
    """Edge logit for one ordered pair.

    Parameters
    ----------
    z_i, z_j : array_like, shape (K,)
        Attribute levels of the source and target node.
    theta : array_like, shape (K, 2, 2)
        Interaction matrices.

    Notes
    -----
    The four outcome terms are grouped as ``(00 + 11) + (01 + 10)`` so that
    swapping ``i`` and ``j`` under symmetric matrices only reorders a
    commutative addition; the result is then bit-for-bit symmetric.
    """
    zi = np.asarray(z_i, dtype=float)
    zj = np.asarray(z_j, dtype=float)
    th = np.asarray(theta, dtype=float)
    ci, cj = 1.0 - zi, 1.0 - zj
    t00 = (ci * cj) * th[:, 0, 0]
    t11 = (zi * zj) * th[:, 1, 1]
    t01 = (ci * zj) * th[:, 0, 1]
    t10 = (zi * cj) * th[:, 1, 0]
    per_attr = (t00 + t11) + (t01 + t10)
    total = 0.0
    for v in per_attr:
        total += v
    return float(total)


def edge_probability(z_i, z_j, theta) -> float:
    return sigmoid(pairwise_logit(z_i, z_j, theta))


def is_symmetric_theta(theta) -> bool:
    th = np.asarray(theta)
    return bool(np.array_equal(th[..., 0, 1], th[..., 1, 0]))


def logit_matrix(z, theta, symmetric=None):
    """All pairwise logits for one timestep.

    ``z`` has shape (N, K) and ``theta`` shape (K, 2, 2).  The result is the
    ``N x N`` matrix of :func:`pairwise_logit` values, diagonal included.
    The computation is bilinear in ``u = [1 - z, z]`` so it runs as matmuls.
    With symmetric matrices (detected unless ``symmetric`` is given) the
    output is symmetrized so that it is exactly symmetric.
    """
    z = np.asarray(z, dtype=float)
    th = np.asarray(theta, dtype=float)
    zc = 1.0 - z
    left0 = zc * th[:, 0, 0] + z * th[:, 1, 0]
    left1 = zc * th[:, 0, 1] + z * th[:, 1, 1]
    L = left0 @ zc.T + left1 @ z.T
    if symmetric is None:
        symmetric = is_symmetric_theta(th)
    if symmetric:
        L = 0.5 * (L + L.T)
    return L


def probability_matrix(z, theta, symmetric=None):
    """Edge probabilities for one timestep with a zeroed diagonal."""
    P = sigmoid(logit_matrix(z, theta, symmetric))
    np.fill_diagonal(P, 0.0)
    return P


def gaussian_log_density(x, mean, var) -> float:
    """Log density of an isotropic Gaussian ``N(mean, var I)`` at ``x``."""
    if not var > 0:
        raise ValueError(f"variance must be positive, got {var!r}")
    x = np.asarray(x, dtype=float)
    mean = np.asarray(mean, dtype=float)
    if x.shape != mean.shape:
        raise ValueError(f"shape mismatch: {x.shape} vs {mean.shape}")
    D = x.size
    return float(-0.5 * D * (LOG_2PI + math.log(var)) - np.sum((x - mean) ** 2) / (2.0 * var))


def sample_snapshot(prob, directed, rng):
    """Independent Bernoulli edges; undirected pairs are drawn once and mirrored."""
    P = np.asarray(prob, dtype=float)
    N = P.shape[0]
    draws = rng.random((N, N)) < P
    if directed:
        A = draws & ~np.eye(N, dtype=bool)
    else:
        A = np.triu(draws, k=1)
        A = A | A.T
    return A.astype(np.int8)


def sample_network(hp: Hyperparams, n_nodes: int, horizon: int, seed=None):
    """Draw a dynamic network from the generative model.

    Parameters
    ----------
    hp : Hyperparams
    n_nodes : int
        N >= 2.
    horizon : int
        Number of snapshots T >= 1.
    seed : int or numpy.random.Generator, optional

    Returns
    -------
    (SnapshotSequence, LatentTrajectory)
    """
    if not isinstance(hp, Hyperparams):
        raise TypeError("hp must be a Hyperparams instance")
    if n_nodes < 2 or horizon < 1:
        raise ValueError("need n_nodes >= 2 and horizon >= 1")
    rng = np.random.default_rng(seed)
    K, d, N, T = hp.K, hp.d, n_nodes, horizon

    psi = np.empty((T, N, K))
    theta_bar = np.empty((T, K, d))
    psi[0] = rng.normal(0.0, math.sqrt(hp.sigma_psi_sq), size=(N, K))
    theta_bar[0] = rng.normal(0.0, math.sqrt(hp.sigma_theta_sq), size=(K, d))
    A = np.zeros((T, N, N), dtype=np.int8)
    for t in range(T):
        theta = expand_interaction_matrix(theta_bar[t], hp.directed)
        A[t] = sample_snapshot(probability_matrix(sigmoid(psi[t]), theta, not hp.directed),
                               hp.directed, rng)
        if t + 1 < T:
            psi[t + 1] = psi[t] + rng.normal(0.0, math.sqrt(hp.s_psi_sq), size=(N, K))
            theta_bar[t + 1] = theta_bar[t] + rng.normal(0.0, math.sqrt(hp.s_theta_sq), size=(K, d))
    return (SnapshotSequence(A, directed=hp.directed),
            LatentTrajectory(psi, theta_bar, directed=hp.directed))
