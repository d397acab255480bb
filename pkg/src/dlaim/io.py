"""File formats, dataset ingestion and run configuration.

Formats
-------
snapshot file
    UTF-8 text, one edge per line as ``t i j`` (1-based timestep, 0-based
    node ids), ``#`` comments and blank lines ignored.  An optional header
    comment ``# dlaim-snapshots nodes=N timesteps=T directed=0|1`` pins the
    node count, horizon and direction so empty snapshots and isolated nodes
    survive a round trip.
matrices and embeddings
    CSV with 9 significant digits.
checkpoints, configs, latent dumps, node maps
    JSON.  Arrays are stored as ``{"shape": [...], "data": [...]}`` with
    row-major flattened data.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from .autodiff import ParameterStore
from .inference import InferenceNetwork, TrainConfig
from .model import Hyperparams, LatentTrajectory, SnapshotSequence

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1
FLOAT_FMT = "%.9g"

__all__ = [
    "FORMAT_VERSION",
    "FormatError",
    "RunConfig",
    "EdgeEvent",
    "parse_snapshots",
    "write_snapshots",
    "read_events",
    "aggregate_windows",
    "write_matrix",
    "read_matrix",
    "write_embeddings",
    "read_embeddings",
    "save_checkpoint",
    "load_checkpoint",
    "write_latent",
    "read_latent",
    "write_report",
    "read_report",
    "write_assignment",
    "write_node_map",
    "read_node_map",
]


class FormatError(ValueError):
    pass


@dataclass
class RunConfig:
    """Everything a CLI run needs.  Standard deviations, not variances."""

    K: int = 32
    s_theta: float = 0.1
    s_psi: float = 0.1
    sigma_theta: float = 10.0
    sigma_psi: float = 10.0
    directed: bool = False
    lr: float = 0.01
    n_batches: int = 1000
    batch_size: int = 0
    seed: int = 0
    h0_scale: float = 1.0
    first: int | None = None
    last: int | None = None
    clusters: int = 2
    input: str | None = None
    output: str | None = None

    def __post_init__(self):
        for name in ("s_theta", "s_psi", "sigma_theta", "sigma_psi", "lr"):
            v = getattr(self, name)
            if not (isinstance(v, (int, float)) and math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive, got {v!r}")
        if self.K < 1:
            raise ValueError(f"K must be >= 1, got {self.K}")
        if self.n_batches < 1:
            raise ValueError(f"n_batches must be >= 1, got {self.n_batches}")
        if self.batch_size < 0 or self.batch_size == 1:
            raise ValueError("batch_size must be 0 (auto) or >= 2")
        if self.clusters < 2:
            raise ValueError("clusters must be >= 2")

    def hyperparams(self) -> Hyperparams:
        return Hyperparams.from_std(self.K, self.s_theta, self.s_psi, self.sigma_theta,
                                    self.sigma_psi, self.directed)

    def train_config(self, seed=None) -> TrainConfig:
        return TrainConfig(lr=self.lr, n_batches=self.n_batches, batch_size=self.batch_size,
                           seed=self.seed if seed is None else seed, h0_scale=self.h0_scale)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))

    def save(self, path):
        with open(path, "w", encoding="utf-8") as fh:
            json.dump(self.to_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")


@dataclass(frozen=True)
class EdgeEvent:
    timestamp: float
    source: str
    target: str


# ---------------------------------------------------------------------------
# snapshot files

_HEADER = re.compile(r"#\s*dlaim-snapshots\s+(.*)")


def _parse_header(text):
    m = _HEADER.match(text)
    if not m:
        return None
    meta = {}
    for item in m.group(1).split():
        key, _, value = item.partition("=")
        meta[key] = int(value)
    return meta


def parse_snapshots(path, directed=None, n_nodes=None) -> SnapshotSequence:
    """Read a snapshot file.

    ``directed`` and ``n_nodes`` override the header; without a header the
    network is undirected and ``N`` is one more than the largest node id.
    Undirected input is symmetrized, duplicate lines are idempotent and
    self-loops are dropped (counted in ``dropped_self_loops`` on the result).
    """
    header = None
    edges = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if header is None:
                    try:
                        header = _parse_header(line)
                    except ValueError as exc:
                        raise FormatError(f"{path}:{lineno}: bad header: {exc}") from None
                continue
            line = line.split("#", 1)[0]
            parts = line.split()
            try:
                if len(parts) != 3:
                    raise ValueError
                t, i, j = (int(p) for p in parts)
            except ValueError:
                raise FormatError(f"{path}:{lineno}: expected 't i j', got {raw.rstrip()!r}") from None
            if i < 0 or j < 0:
                raise FormatError(f"{path}:{lineno}: negative node id")
            if t < 1:
                raise FormatError(f"{path}:{lineno}: timesteps start at 1, got {t}")
            edges.append((t, i, j))

    header = header or {}
    if directed is None:
        directed = bool(header.get("directed", 0))
    max_id = max((max(i, j) for _, i, j in edges), default=-1)
    N = n_nodes or header.get("nodes") or max_id + 1
    if max_id >= N:
        raise FormatError(f"node id {max_id} out of range for {N} nodes")
    seen_t = sorted({t for t, _, _ in edges})
    T = header.get("timesteps") or (seen_t[-1] if seen_t else 0)
    if T < 1:
        raise FormatError(f"{path}: no snapshots")
    if seen_t and seen_t[-1] > T:
        raise FormatError(f"timestep {seen_t[-1]} beyond declared horizon {T}")
    if "timesteps" not in header and seen_t != list(range(1, T + 1)):
        missing = sorted(set(range(1, T + 1)) - set(seen_t))
        raise FormatError(f"non-contiguous timesteps: missing {missing}")

    A = np.zeros((T, N, N), dtype=np.int8)
    loops = 0
    for t, i, j in edges:
        if i == j:
            loops += 1
            continue
        A[t - 1, i, j] = 1
        if not directed:
            A[t - 1, j, i] = 1
    if loops:
        logger.warning("%s: dropped %d self-loop line(s)", path, loops)
    seq = SnapshotSequence(A, directed=directed)
    seq.dropped_self_loops = loops
    return seq


def write_snapshots(seq: SnapshotSequence, path):
    """Write ``seq`` with a header; undirected edges are written once (``i < j``)."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# dlaim-snapshots nodes={seq.n_nodes} timesteps={seq.horizon} "
                 f"directed={int(seq.directed)}\n")
        for t in range(seq.horizon):
            A = seq[t] if seq.directed else np.triu(seq[t], k=1)
            for i, j in zip(*np.nonzero(A)):
                fh.write(f"{t + 1} {i} {j}\n")


# ---------------------------------------------------------------------------
# raw event streams

def read_events(path):
    """Read ``timestamp source target`` lines (whitespace or comma separated)."""
    events = []
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.replace(",", " ").split()
            if len(parts) < 3:
                raise FormatError(f"{path}:{lineno}: expected 'timestamp source target'")
            try:
                ts = float(parts[0])
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad timestamp {parts[0]!r}") from None
            events.append(EdgeEvent(ts, parts[1], parts[2]))
    return events


def _label_key(label):
    s = str(label)
    return (0, int(s), s) if s.lstrip("-").isdigit() else (1, 0, s)


def aggregate_windows(events, window_width, start, n_windows, directed=False, node_ids=None):
    """Bin timestamped events into binary snapshots.

    Window ``w`` is the half-open interval
    ``[start + w * width, start + (w + 1) * width)``; events outside windows
    ``0 .. n_windows - 1`` are dropped.  Node labels are mapped to dense
    indices in sorted order (numeric labels numerically) unless
    ``node_ids`` (label -> index) is given.

    Returns
    -------
    (SnapshotSequence, dict)
        The snapshots and the label -> index map.
    """
    if not window_width > 0:
        raise ValueError("window_width must be positive")
    if n_windows < 1:
        raise ValueError("n_windows must be >= 1")
    kept = []
    for ev in events:
        w = math.floor((ev.timestamp - start) / window_width)
        if 0 <= w < n_windows:
            kept.append((w, str(ev.source), str(ev.target)))
    if not kept:
        raise ValueError("no events fall inside the requested windows")
    if node_ids is None:
        labels = sorted({s for _, s, _ in kept} | {d for _, _, d in kept}, key=_label_key)
        node_ids = {label: idx for idx, label in enumerate(labels)}
    N = max(node_ids.values()) + 1
    if N < 2:
        raise ValueError("need at least two distinct nodes")
    A = np.zeros((n_windows, N, N), dtype=np.int8)
    for w, s, d in kept:
        i, j = node_ids[s], node_ids[d]
        if i == j:
            continue
        A[w, i, j] = 1
        if not directed:
            A[w, j, i] = 1
    return SnapshotSequence(A, directed=directed), dict(node_ids)


def write_node_map(node_ids: dict, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"format_version": FORMAT_VERSION, "nodes": node_ids}, fh, indent=1)
        fh.write("\n")


def read_node_map(path) -> dict:
    data = _load_versioned(path)
    return {str(k): int(v) for k, v in data["nodes"].items()}


# ---------------------------------------------------------------------------
# matrices, embeddings, reports

def write_matrix(matrix, path):
    np.savetxt(path, np.asarray(matrix, dtype=float), fmt=FLOAT_FMT, delimiter=",")


def read_matrix(path, shape=None) -> np.ndarray:
    M = np.loadtxt(path, delimiter=",", ndmin=2)
    if shape is not None and M.shape != tuple(shape):
        raise FormatError(f"{path}: expected shape {tuple(shape)}, got {M.shape}")
    return M


def write_embeddings(z, theta, z_path, theta_path):
    """Attributes as rows ``t,node,z_1..z_K``; matrices as ``t,k,theta00..theta11``.

    Timesteps are 1-based.
    """
    T, N, K = z.shape
    with open(z_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "node"] + [f"z_{k + 1}" for k in range(K)])
        for t in range(T):
            for n in range(N):
                w.writerow([t + 1, n] + [FLOAT_FMT % v for v in z[t, n]])
    with open(theta_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "k", "theta00", "theta01", "theta10", "theta11"])
        for t in range(T):
            for k in range(theta.shape[1]):
                w.writerow([t + 1, k + 1] + [FLOAT_FMT % v for v in theta[t, k].ravel()])


def read_embeddings(z_path, theta_path):
    zt = np.loadtxt(z_path, delimiter=",", skiprows=1, ndmin=2)
    tt = np.loadtxt(theta_path, delimiter=",", skiprows=1, ndmin=2)
    T = int(zt[:, 0].max())
    N = int(zt[:, 1].max()) + 1
    K = zt.shape[1] - 2
    if zt.shape[0] != T * N or tt.shape[0] != T * K:
        raise FormatError("embedding files do not hold complete timestep blocks")
    z = zt[:, 2:].reshape(T, N, K)
    theta = tt[:, 2:].reshape(T, K, 2, 2)
    return z, theta


def write_report(rows, path, mean=True):
    """CSV ``timestep,auc`` with an optional trailing ``mean`` row."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["timestep", "auc"])
        for t, value in rows:
            w.writerow([t, FLOAT_FMT % value])
        if mean and rows:
            w.writerow(["mean", FLOAT_FMT % float(np.mean([v for _, v in rows]))])


def read_report(path):
    with open(path, encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        if header != ["timestep", "auc"]:
            raise FormatError(f"{path}: unexpected header {header}")
        return [(row[0], float(row[1])) for row in r]


def write_assignment(labels, path, node_labels=None):
    names = node_labels if node_labels is not None else list(range(len(labels)))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "community"])
        for name, c in zip(names, labels):
            w.writerow([name, int(c)])


# ---------------------------------------------------------------------------
# JSON artifacts

def _encode_array(a):
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _decode_array(obj, name="array"):
    try:
        shape = tuple(int(s) for s in obj["shape"])
        data = np.asarray(obj["data"], dtype=float)
    except (KeyError, TypeError, ValueError) as exc:
        raise FormatError(f"{name}: malformed array record") from exc
    if data.size != int(np.prod(shape)):
        raise FormatError(f"{name}: {data.size} values do not fill shape {shape}")
    return data.reshape(shape)


def _load_versioned(path):
    with open(path, encoding="utf-8") as fh:
        data = json.load(fh)
    version = data.get("format_version")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: format_version {version!r}, expected {FORMAT_VERSION}")
    return data


def save_checkpoint(net: InferenceNetwork, path, config=None, trained_horizon=None):
    """Write all named parameters plus an echo of the run configuration.

    Values are written with full double precision.
    """
    if isinstance(config, RunConfig):
        config = config.to_dict()
    doc = {
        "format_version": FORMAT_VERSION,
        "config": config or {},
        "n_nodes": net.n_nodes,
        "K": net.K,
        "directed": net.directed,
        "input_dim": net.input_dim,
        "trained_horizon": trained_horizon,
        "params": {name: _encode_array(v) for name, v in net.params.items()},
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh)
        fh.write("\n")


def load_checkpoint(path):
    """Inverse of :func:`save_checkpoint`; returns ``(net, document)``."""
    doc = _load_versioned(path)
    params = ParameterStore()
    for name, rec in doc["params"].items():
        params[name] = _decode_array(rec, name)
    try:
        net = InferenceNetwork(params, int(doc["n_nodes"]), int(doc["K"]), bool(doc["directed"]),
                               int(doc.get("input_dim", 1)))
    except (KeyError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from exc
    return net, doc


def write_latent(latent: LatentTrajectory, path):
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"format_version": FORMAT_VERSION,
                   "directed": latent.directed,
                   "psi": _encode_array(latent.psi),
                   "theta_bar": _encode_array(latent.theta_bar)}, fh)
        fh.write("\n")


def read_latent(path) -> LatentTrajectory:
    doc = _load_versioned(path)
    return LatentTrajectory(_decode_array(doc["psi"], "psi"),
                            _decode_array(doc["theta_bar"], "theta_bar"),
                            directed=bool(doc["directed"]))
