"""Neural variational inference for the dynamic attribute model.

The posterior over every ``psi_n^(t)`` and ``theta_bar_k^(t)`` is a diagonal
Gaussian.  Four GRUs produce the means and log-variances: the hidden state
at step ``t`` *is* the variational parameter for timestep ``t``, the first
one is a learnable per-node (or per-attribute) vector, and every GRU input
is zero.  Training maximizes a single-sample ELBO on random node batches
with Adam.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, ParameterStore, Tape
from .gru import WEIGHT_NAMES, GruParams, gru_unroll
from .model import (LOG_2PI, Hyperparams, SnapshotSequence, expand_interaction_matrix,
                    probability_matrix, sigmoid, theta_dim)

logger = logging.getLogger(__name__)

__all__ = [
    "GRU_NAMES",
    "InferenceNetwork",
    "VariationalState",
    "LatentSample",
    "TrainConfig",
    "unroll_variational",
    "reparameterized_sample",
    "draw_samples",
    "likelihood_term",
    "elbo_batch",
    "elbo_objective",
    "evaluate_elbo",
    "initial_network",
    "train",
    "forecast",
    "extract_embeddings",
]

GRU_NAMES = ("m_psi", "s_psi", "m_theta", "s_theta")


class InferenceNetwork:
    """Parameters of the four GRUs and their learnable initial states.

    Names are ``"<gru>.<W1..W6|h0>"`` with ``<gru>`` one of
    :data:`GRU_NAMES`.  The ``psi`` GRUs have hidden size ``K`` and one
    initial state per node (``h0`` is ``N x K``); the ``theta`` GRUs have
    hidden size ``d`` (4 directed, 3 undirected) and one initial state per
    attribute (``K x d``).  The parameter count does not depend on the
    number of timesteps, so a network trained on one horizon can warm-start
    the next.
    """

    def __init__(self, params: ParameterStore, n_nodes: int, K: int, directed: bool,
                 input_dim: int = 1):
        self.params = params
        self.n_nodes = n_nodes
        self.K = K
        self.directed = directed
        self.input_dim = input_dim
        self.history: list[float] = []
        self._check_shapes()

    @classmethod
    def initialize(cls, n_nodes, K, directed=False, seed=None, input_dim=1,
                   weight_scale=0.1, h0_scale=0.0):
        """Fresh network: weights uniform in ``[-weight_scale, weight_scale]``.

        Initial states are zero unless ``h0_scale > 0``, in which case the
        mean GRUs' initial states are drawn from ``N(0, h0_scale^2)``.
        """
        rng = np.random.default_rng(seed)
        d = theta_dim(directed)
        params = ParameterStore()
        for g in GRU_NAMES:
            k = K if g.endswith("psi") else d
            for w in WEIGHT_NAMES:
                rows = input_dim if w in ("W1", "W3", "W5") else k
                params[f"{g}.{w}"] = rng.uniform(-weight_scale, weight_scale, size=(rows, k))
            shape = (n_nodes, K) if g.endswith("psi") else (K, d)
            if h0_scale > 0 and g.startswith("m_"):
                params[f"{g}.h0"] = rng.normal(0.0, h0_scale, size=shape)
            else:
                params[f"{g}.h0"] = np.zeros(shape)
        return cls(params, n_nodes, K, directed, input_dim)

    def _check_shapes(self):
        d = self.d
        for g in GRU_NAMES:
            k = self.K if g.endswith("psi") else d
            for w in WEIGHT_NAMES:
                rows = self.input_dim if w in ("W1", "W3", "W5") else k
                if self.params[f"{g}.{w}"].shape != (rows, k):
                    raise ValueError(f"{g}.{w} has shape {self.params[f'{g}.{w}'].shape}, "
                                     f"expected {(rows, k)}")
            shape = (self.n_nodes, self.K) if g.endswith("psi") else (self.K, d)
            if self.params[f"{g}.h0"].shape != shape:
                raise ValueError(f"{g}.h0 has shape {self.params[f'{g}.h0'].shape}, expected {shape}")

    @property
    def d(self) -> int:
        return theta_dim(self.directed)

    def gru(self, name, source=None) -> GruParams:
        """``GruParams`` for one GRU, read from ``source`` (default: own arrays)."""
        src = self.params if source is None else source
        return GruParams(h0=src[f"{name}.h0"], **{w: src[f"{name}.{w}"] for w in WEIGHT_NAMES})

    def copy(self) -> "InferenceNetwork":
        return InferenceNetwork(self.params.copy(), self.n_nodes, self.K, self.directed,
                                self.input_dim)


@dataclass
class VariationalState:
    """Per-timestep variational parameters.

    Each field is a list of length ``T``; entry ``t`` holds the rows for
    ``nodes`` (psi fields, ``len(nodes) x K``) or all attributes (theta
    fields, ``K x d``).  Entries are tape variables while training and
    numpy arrays otherwise.
    """

    m_psi: list
    logvar_psi: list
    m_theta: list
    logvar_theta: list
    nodes: np.ndarray

    @property
    def horizon(self) -> int:
        return len(self.m_psi)

    def arrays(self) -> dict:
        """Stacked numpy values: ``m_psi`` is ``T x n x K`` and so on."""
        def stack(seq):
            return np.stack([v.value if isinstance(v, ad.Var) else np.asarray(v) for v in seq])
        return {name: stack(getattr(self, name))
                for name in ("m_psi", "logvar_psi", "m_theta", "logvar_theta")}


@dataclass
class LatentSample:
    """One draw of ``psi`` (list of ``n x K``) and ``theta_bar`` (list of ``K x d``)."""

    psi: list
    theta_bar: list


def _unroll(net: InferenceNetwork, source, horizon: int, nodes) -> VariationalState:
    seqs = {}
    for g in GRU_NAMES:
        p = net.gru(g, source)
        h0 = ad.take_rows(p.h0, nodes) if g.endswith("psi") else p.h0
        seq = [h0]
        if horizon > 1:
            seq += gru_unroll(p, horizon - 1, h0=h0)
        seqs[g] = seq
    return VariationalState(seqs["m_psi"], seqs["s_psi"], seqs["m_theta"], seqs["s_theta"],
                            nodes=np.asarray(nodes))


def unroll_variational(net: InferenceNetwork, horizon: int, nodes=None, source=None) -> VariationalState:
    """Variational parameters for timesteps ``1..horizon``.

    Timestep 1 is the learnable initial state itself; each GRU step maps the
    parameters of timestep ``t`` to those of ``t + 1``.  Rows of different
    nodes never interact.

    Parameters
    ----------
    net : InferenceNetwork
    horizon : int
        Number of timesteps ``T >= 1``; ``T - 1`` GRU steps are run.
    nodes : array of int, optional
        Node rows to unroll (default all nodes).
    source : mapping, optional
        Parameter values to use instead of ``net.params``, e.g. the tape
        variables returned by ``Tape.parameters``.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if nodes is None:
        nodes = np.arange(net.n_nodes)
    return _unroll(net, source, horizon, np.asarray(nodes, dtype=int))


def reparameterized_sample(m, logvar, noise):
    """``m + exp(logvar / 2) * noise``, differentiable in ``m`` and ``logvar``."""
    return m + ad.exp(0.5 * logvar) * noise


def draw_samples(vs: VariationalState, noise_psi, noise_theta) -> LatentSample:
    """Reparameterized draws for every timestep.

    Timestep 1 uses the means directly; ``noise_psi[0]`` and
    ``noise_theta[0]`` are ignored.
    """
    T = vs.horizon
    psi = [vs.m_psi[0]]
    theta = [vs.m_theta[0]]
    for t in range(1, T):
        psi.append(reparameterized_sample(vs.m_psi[t], vs.logvar_psi[t], noise_psi[t]))
        theta.append(reparameterized_sample(vs.m_theta[t], vs.logvar_theta[t], noise_theta[t]))
    return LatentSample(psi, theta)


def _logits(psi_t, theta_t, directed):
    z = ad.sigmoid(psi_t)
    zc = 1.0 - z
    if directed:
        a, b, c, d = (ad.column(theta_t, j) for j in range(4))
    else:
        a, b, d = (ad.column(theta_t, j) for j in range(3))
        c = b
    left0 = zc * a + z * c
    left1 = zc * b + z * d
    return left0 @ ad.transpose(zc) + left1 @ ad.transpose(z)


def pair_mask(n, directed):
    """Pairs that enter the likelihood: ``i != j`` directed, ``i < j`` undirected."""
    if directed:
        return ~np.eye(n, dtype=bool)
    return np.triu(np.ones((n, n), dtype=bool), k=1)


def n_pairs(n, directed):
    return n * (n - 1) if directed else n * (n - 1) // 2


def likelihood_term(adjacency, psi, theta_bar, nodes, directed):
    """Bernoulli log-likelihood of the edges among ``nodes``, unscaled.

    ``adjacency`` is the full ``T x N x N`` array; ``psi[t]`` holds the rows
    of ``nodes`` at timestep ``t`` and ``theta_bar[t]`` is ``K x d``.
    """
    nodes = np.asarray(nodes)
    mask = pair_mask(len(nodes), directed).astype(float)
    total = 0.0
    for t in range(len(psi)):
        A = adjacency[t][np.ix_(nodes, nodes)].astype(float)
        L = _logits(psi[t], theta_bar[t], directed)
        total = total + ad.vsum(ad.mul(mask * A, L)) - ad.vsum(ad.mul(mask, ad.softplus(L)))
    return total


def _chain_terms(m, logvar, prior_var, step_var):
    """Closed-form ``E_q`` of the prior and random-walk log densities."""
    size = m[0].value.size if isinstance(m[0], ad.Var) else np.size(m[0])
    total = -0.5 * size * (LOG_2PI + math.log(prior_var))
    total = total - (0.5 / prior_var) * ad.vsum(ad.square(m[0]) + ad.exp(logvar[0]))
    for t in range(1, len(m)):
        total = total - 0.5 * size * (LOG_2PI + math.log(step_var))
        spread = ad.square(m[t] - m[t - 1]) + ad.exp(logvar[t]) + ad.exp(logvar[t - 1])
        total = total - (0.5 / step_var) * ad.vsum(spread)
    return total


def _entropy(logvar):
    size = logvar[0].value.size if isinstance(logvar[0], ad.Var) else np.size(logvar[0])
    total = 0.0
    for lv in logvar:
        total = total + 0.5 * size * (1.0 + LOG_2PI) + 0.5 * ad.vsum(lv)
    return total


def elbo_batch(snapshots: SnapshotSequence, vs: VariationalState, samples: LatentSample,
               batch_nodes, hp: Hyperparams):
    """Mini-batch estimate of the ELBO.

    ``vs`` and ``samples`` must hold the rows of ``batch_nodes`` (in that
    order) for all ``T`` snapshots.  The edge term is scaled by the ratio of
    all pairs to batch pairs and the per-node terms by ``N / b``, so the
    estimate is unbiased for the full-data objective.  Attribute terms are
    never subsampled.

    Returns a tape variable when the inputs live on a tape, else a float.
    """
    batch_nodes = np.asarray(batch_nodes, dtype=int)
    b = len(batch_nodes)
    N = snapshots.n_nodes
    if b < 2:
        raise ValueError("a batch needs at least two nodes")
    if len(np.unique(batch_nodes)) != b or batch_nodes.min() < 0 or batch_nodes.max() >= N:
        raise ValueError("batch_nodes must be distinct node indices")
    T = vs.horizon
    if T < 1 or T > snapshots.horizon:
        raise ValueError(f"state covers {T} timesteps, data has {snapshots.horizon}")
    if vs.nodes.shape != batch_nodes.shape or np.any(vs.nodes != batch_nodes):
        raise ValueError("variational state rows do not match batch_nodes")
    if hp.directed != snapshots.directed:
        raise ValueError("hyperparameters and data disagree on directedness")

    pair_scale = n_pairs(N, hp.directed) / n_pairs(b, hp.directed)
    node_scale = N / b
    lik = likelihood_term(snapshots.adjacency, samples.psi, samples.theta_bar, batch_nodes,
                          hp.directed)
    psi_terms = (_chain_terms(vs.m_psi, vs.logvar_psi, hp.sigma_psi_sq, hp.s_psi_sq)
                 + _entropy(vs.logvar_psi))
    theta_terms = (_chain_terms(vs.m_theta, vs.logvar_theta, hp.sigma_theta_sq, hp.s_theta_sq)
                   + _entropy(vs.logvar_theta))
    return pair_scale * lik + node_scale * psi_terms + theta_terms


def elbo_objective(net, snapshots, hp, nodes, noise_psi, noise_theta, source=None):
    """Unroll, sample and evaluate the batch ELBO in one call."""
    vs = unroll_variational(net, snapshots.horizon, nodes, source=source)
    samples = draw_samples(vs, noise_psi, noise_theta)
    return elbo_batch(snapshots, vs, samples, nodes, hp)


def evaluate_elbo(net: InferenceNetwork, snapshots: SnapshotSequence, hp: Hyperparams) -> float:
    """Full-batch ELBO with means substituted for every sample."""
    N, T = snapshots.n_nodes, snapshots.horizon
    zeros_psi = np.zeros((T, N, hp.K))
    zeros_theta = np.zeros((T, hp.K, hp.d))
    return float(elbo_objective(net, snapshots, hp, np.arange(N), zeros_psi, zeros_theta))


@dataclass
class TrainConfig:
    """Optimizer settings.  ``batch_size=0`` means ``min(N, 256)``.

    ``h0_scale`` is the standard deviation of the random initial variational
    means.  Starting every mean at zero puts all attributes at 0.5, where the
    interaction entries receive identical gradients and training stalls.
    """

    lr: float = 0.01
    n_batches: int = 1000
    batch_size: int = 0
    seed: int = 0
    weight_scale: float = 0.1
    h0_scale: float = 1.0
    log_every: int = 0

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError(f"lr must be positive, got {self.lr!r}")
        if int(self.n_batches) != self.n_batches or self.n_batches < 1:
            raise ValueError(f"n_batches must be a positive integer, got {self.n_batches!r}")
        if self.batch_size < 0 or self.batch_size == 1:
            raise ValueError(f"batch_size must be 0 (auto) or >= 2, got {self.batch_size!r}")

    def resolve_batch_size(self, n_nodes):
        b = self.batch_size or min(n_nodes, 256)
        return min(b, n_nodes)


def _check_compatible(net, snapshots, hp):
    if net.n_nodes != snapshots.n_nodes or net.K != hp.K or net.directed != hp.directed:
        raise ValueError(
            f"network (N={net.n_nodes}, K={net.K}, directed={net.directed}) does not fit "
            f"data N={snapshots.n_nodes} / K={hp.K}, directed={hp.directed}")


def _seed_streams(seed):
    """Independent ``(init, run)`` seed sequences derived from one seed."""
    return np.random.SeedSequence(seed).spawn(2)


def initial_network(snapshots: SnapshotSequence, hp: Hyperparams, config: TrainConfig = None,
                    warm_start: InferenceNetwork = None) -> InferenceNetwork:
    """The network :func:`train` starts from for these arguments."""
    config = config or TrainConfig()
    if warm_start is not None:
        _check_compatible(warm_start, snapshots, hp)
        return warm_start.copy()
    rng = np.random.default_rng(_seed_streams(config.seed)[0])
    return InferenceNetwork.initialize(snapshots.n_nodes, hp.K, hp.directed, seed=rng,
                                       weight_scale=config.weight_scale, h0_scale=config.h0_scale)


def train(snapshots: SnapshotSequence, hp: Hyperparams, config: TrainConfig = None,
          warm_start: InferenceNetwork = None, callback=None) -> InferenceNetwork:
    """Fit an inference network to ``snapshots`` by Adam on the negative ELBO.

    Every iteration draws ``min(N, 256)`` nodes (or ``config.batch_size``)
    uniformly without replacement and fresh standard-normal noise, then
    takes one optimizer step.  Runs are reproducible from ``config.seed``.
    With ``warm_start`` all parameters are copied from that network.

    ``callback(iteration, elbo_value, net)`` is called after every step.
    The per-iteration batch ELBO values are kept in ``net.history``.
    """
    config = config or TrainConfig()
    if hp.directed != snapshots.directed:
        raise ValueError("hyperparameters and data disagree on directedness")
    N, T, K, d = snapshots.n_nodes, snapshots.horizon, hp.K, hp.d
    net = initial_network(snapshots, hp, config, warm_start)
    rng = np.random.default_rng(_seed_streams(config.seed)[1])
    b = config.resolve_batch_size(N)
    opt = Adam(lr=config.lr)
    net.history = []
    for it in range(config.n_batches):
        nodes = np.sort(rng.choice(N, size=b, replace=False))
        noise_psi = rng.standard_normal((T, b, K))
        noise_theta = rng.standard_normal((T, K, d))
        tape = Tape()
        source = tape.parameters(net.params)
        elbo = elbo_objective(net, snapshots, hp, nodes, noise_psi, noise_theta, source=source)
        grads = tape.gradient(-elbo)
        opt.step(net.params, grads)
        value = float(elbo.value)
        net.history.append(value)
        if config.log_every and (it + 1) % config.log_every == 0:
            logger.info("batch %d/%d  elbo %.4f", it + 1, config.n_batches, value)
        if callback is not None:
            callback(it, value, net)
    return net


def forecast(net: InferenceNetwork, trained_horizon: int) -> np.ndarray:
    """Edge probabilities for timestep ``trained_horizon + 1``.

    The GRUs are unrolled one step past the training window and the means
    are plugged into the edge model (no sampling).  The diagonal is zero and
    the matrix is exactly symmetric for undirected networks.
    """
    if trained_horizon < 1:
        raise ValueError("trained_horizon must be >= 1")
    vs = unroll_variational(net, trained_horizon + 1)
    z = sigmoid(np.asarray(vs.m_psi[-1]))
    theta = expand_interaction_matrix(np.asarray(vs.m_theta[-1]), net.directed)
    return probability_matrix(z, theta, symmetric=not net.directed)


def extract_embeddings(net: InferenceNetwork, horizon: int):
    """Posterior-mean attributes and interaction matrices.

    Returns
    -------
    z : ndarray, shape (T, N, K)
    theta : ndarray, shape (T, K, 2, 2)
    """
    arrays = unroll_variational(net, horizon).arrays()
    return sigmoid(arrays["m_psi"]), expand_interaction_matrix(arrays["m_theta"], net.directed)
