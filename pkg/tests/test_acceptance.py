"""Acceptance suite.  One summary line per criterion is printed at the end of the run."""

import itertools
import os
import time
from pathlib import Path

import numpy as np
import pytest
from sklearn.metrics import adjusted_rand_score

from dlaim import io
from dlaim.autodiff import Tape, finite_diff_check
from dlaim.evaluation import auc, bas_baseline, community_detect, evaluate_forecast
from dlaim.inference import (InferenceNetwork, TrainConfig, elbo_objective, evaluate_elbo,
                             forecast, initial_network, train)
from dlaim.model import Hyperparams, SnapshotSequence, pairwise_logit, sample_network

ACCEPTANCE_SEEDS = (0, 1, 2, 3, 4)


# criterion 1 ---------------------------------------------------------------

def test_criterion_1_elbo_gradient(report):
    N, K, T = 6, 3, 4
    start = time.perf_counter()
    errors = []
    for seed in ACCEPTANCE_SEEDS:
        hp = Hyperparams.from_std(K, s_theta=0.5, s_psi=0.5, sigma_theta=2.0, sigma_psi=2.0)
        seq, _ = sample_network(hp, N, T, seed=seed)
        net = InferenceNetwork.initialize(N, K, seed=100 + seed, weight_scale=0.5, h0_scale=1.0)
        rng = np.random.default_rng(200 + seed)
        noise_psi = rng.standard_normal((T, N, K))
        noise_theta = rng.standard_normal((T, K, hp.d))

        def loss(tape, v):
            return elbo_objective(net, seq, hp, np.arange(N), noise_psi, noise_theta, source=v)

        errors.append(finite_diff_check(loss, net.params, h=1e-5))
    elapsed = time.perf_counter() - start
    ok = max(errors) < 1e-4 and elapsed < 60
    report(1, ok, f"max rel err {max(errors):.2e} over {len(errors)} seeds "
                  f"(need < 1e-4), {elapsed:.1f}s (need < 60s)")
    assert ok


# criterion 2 ---------------------------------------------------------------

def enumerated_logit(z_i, z_j, theta):
    total = 0.0
    for k in range(len(z_i)):
        for x, y in itertools.product((0, 1), repeat=2):
            px = z_i[k] if x else 1.0 - z_i[k]
            py = z_j[k] if y else 1.0 - z_j[k]
            total += px * py * theta[k, x, y]
    return total


def test_criterion_2_logit_enumeration(report):
    rng = np.random.default_rng(2)
    worst = 0.0
    for _ in range(1000):
        K = int(rng.integers(1, 9))
        z_i, z_j = rng.uniform(size=(2, K))
        theta = rng.normal(0.0, 5.0, size=(K, 2, 2))
        worst = max(worst, abs(pairwise_logit(z_i, z_j, theta) - enumerated_logit(z_i, z_j, theta)))
    ok = worst < 1e-12
    report(2, ok, f"max |diff| {worst:.1e} over 1000 draws (need < 1e-12)")
    assert ok


# criterion 3 ---------------------------------------------------------------

def pairwise_auc(scores, labels):
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_criterion_3_auc_and_baseline(report):
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 80))
        scores = np.round(rng.uniform(size=n), int(rng.integers(1, 4)))
        labels = rng.integers(0, 2, size=n)
        labels[:2] = [0, 1]
        worst = max(worst, abs(auc(scores, labels) - pairwise_auc(scores, labels)))
    bas_exact = True
    for T in (1, 4, 10):
        A = rng.integers(0, 2, size=(T, 8, 8))
        A = np.triu(A, 1)
        A = A + A.transpose(0, 2, 1)
        P = bas_baseline(SnapshotSequence(A))
        counts = A.sum(axis=0)
        off = ~np.eye(8, dtype=bool)
        bas_exact &= bool(np.all(P[off] == (counts[off] + 1.0) / (T + 2.0)))
        bas_exact &= bool(np.all(np.diag(P) == 0))
    ok = worst < 1e-12 and bas_exact
    report(3, ok, f"auc max |diff| {worst:.1e} over 100 instances (need < 1e-12); "
                  f"baseline exact: {bas_exact}")
    assert ok


# criteria 4 and 5 ----------------------------------------------------------

SYNTH = dict(K=4, s_theta=0.1, s_psi=0.1, sigma_theta=1.0, sigma_psi=1.0)


@pytest.fixture(scope="module")
def synthetic_runs():
    hp = Hyperparams.from_std(**SYNTH)
    cfg_batches = 1500
    rows = []
    start = time.perf_counter()
    for seed in ACCEPTANCE_SEEDS:
        seq, _ = sample_network(hp, 30, 10, seed=seed)
        history = seq.head(9)
        cfg = TrainConfig(lr=0.01, n_batches=cfg_batches, seed=seed)
        before = evaluate_elbo(initial_network(history, hp, cfg), history, hp)
        net = train(history, hp, cfg)
        after = evaluate_elbo(net, history, hp)
        rows.append({
            "seed": seed,
            "auc": evaluate_forecast(forecast(net, 9), seq[9]),
            "bas": evaluate_forecast(bas_baseline(history), seq[9]),
            "elbo_before": before,
            "elbo_after": after,
        })
    return rows, time.perf_counter() - start


@pytest.mark.slow
def test_criterion_4_synthetic_forecast(synthetic_runs, report):
    rows, elapsed = synthetic_runs
    model = float(np.mean([r["auc"] for r in rows]))
    base = float(np.mean([r["bas"] for r in rows]))
    per_seed = " ".join(f"{r['auc']:.3f}/{r['bas']:.3f}" for r in rows)
    ok = model >= base + 0.02 and elapsed < 600
    report(4, ok, f"mean AUC {model:.4f} vs baseline {base:.4f}, margin {model - base:+.4f} "
                  f"(need >= +0.02), {elapsed:.0f}s; per seed model/baseline {per_seed}")
    assert ok


@pytest.mark.slow
def test_criterion_5_elbo_ascent(synthetic_runs, report):
    rows, _ = synthetic_runs
    gains = [r["elbo_after"] - r["elbo_before"] for r in rows]
    ok = all(g > 0 for g in gains)
    report(5, ok, "ELBO gain per seed " + " ".join(f"{g:+.1f}" for g in gains) + " (need all > 0)")
    assert ok


# criterion 6 ---------------------------------------------------------------

def test_criterion_6_symmetry_and_direction(report):
    hp_u = Hyperparams.from_std(3, sigma_theta=2.0, sigma_psi=2.0)
    seq_u, _ = sample_network(hp_u, 15, 4, seed=6)
    net_u = train(seq_u, hp_u, TrainConfig(n_batches=50, seed=6))
    P = forecast(net_u, 4)
    symmetric = bool(np.array_equal(P, P.T)) and bool(np.all(np.diag(P) == 0))

    # an asymmetric directed network: edges only run from low to high ids
    A = np.zeros((3, 10, 10), dtype=int)
    rng = np.random.default_rng(6)
    for t in range(3):
        A[t] = np.triu(rng.uniform(size=(10, 10)) < 0.5, 1)
    seq_d = SnapshotSequence(A, directed=True)
    hp_d = Hyperparams(3, directed=True)
    net_d = InferenceNetwork.initialize(10, 3, directed=True, seed=7, h0_scale=1.0)
    tape = Tape()
    src = tape.parameters(net_d.params)
    elbo = elbo_objective(net_d, seq_d, hp_d, np.arange(10), np.zeros((3, 10, 3)),
                          np.zeros((3, 3, 4)), source=src)
    g = tape.gradient(elbo)["m_theta.h0"]
    all_entries = bool(np.all(np.abs(g).max(axis=0) > 0))
    asymmetric = bool(np.abs(g[:, 1] - g[:, 2]).max() > 1e-6)
    ok = symmetric and all_entries and asymmetric
    report(6, ok, f"undirected forecast symmetric with zero diagonal: {symmetric}; "
                  f"directed gradient reaches all 4 entries: {all_entries}; "
                  f"01 vs 10 gradients differ: {asymmetric}")
    assert ok


# criterion 7 ---------------------------------------------------------------

def test_criterion_7_planted_communities(report):
    truth = np.repeat([0, 1], 8)
    S = np.where(truth[:, None] == truth[None, :], 6.0, -6.0)
    labels = community_detect(S, 2, seed=0).labels
    ari = adjusted_rand_score(truth, labels)
    shifted = community_detect(S + 3.7, 2, seed=0).labels
    invariant = bool(np.array_equal(labels, shifted))
    ok = ari == 1.0 and invariant
    report(7, ok, f"ARI {ari:.3f} (need 1.0); invariant to constant shift: {invariant}")
    assert ok


# criterion 8 ---------------------------------------------------------------

PUBLISHED = {"enron50.txt": (0.923, False), "enron_full.txt": (0.928, True)}


def test_criterion_8_published_numbers(report, tmp_path):
    data_dir = os.environ.get("DLAIM_DATA_DIR")
    found = [name for name in PUBLISHED if data_dir and (Path(data_dir) / name).exists()]
    if not found:
        reason = ("original Enron snapshot files not available; set DLAIM_DATA_DIR to a directory "
                  "holding enron50.txt or enron_full.txt to run this check")
        report(8, None, reason)
        pytest.skip(reason)
    lines = []
    ok = True
    for name in found:
        target, directed = PUBLISHED[name]
        seq = io.parse_snapshots(Path(data_dir) / name, directed=directed or None)
        hp = io.RunConfig(directed=directed).hyperparams()
        means = []
        for run in range(5):
            net, scores = None, []
            for t in range(2, seq.horizon + 1):
                cfg = TrainConfig(seed=run)
                net = train(seq.head(t - 1), hp, cfg, warm_start=net)
                scores.append(evaluate_forecast(forecast(net, t - 1), seq[t - 1], directed=directed))
            means.append(np.mean(scores))
        got = float(np.mean(means))
        ok &= abs(got - target) <= 0.03
        lines.append(f"{name} {got:.3f} vs {target:.3f}")
    report(8, ok, "; ".join(lines) + " (need within 0.03)")
    assert ok
