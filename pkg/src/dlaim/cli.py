"""Command line interface: ``dlaim <subcommand> ...``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import io
from .evaluation import bas_baseline, community_detect, evaluate_forecast, score_matrix
from .inference import extract_embeddings, forecast, train
from .model import sample_network

logger = logging.getLogger("dlaim")

# CLI flag -> RunConfig field
_CONFIG_FLAGS = {
    "k": "K", "s_theta": "s_theta", "s_psi": "s_psi", "sigma_theta": "sigma_theta",
    "sigma_psi": "sigma_psi", "lr": "lr", "batches": "n_batches", "batch_size": "batch_size",
    "seed": "seed", "directed": "directed", "clusters": "clusters", "h0_scale": "h0_scale",
}


class CLIError(Exception):
    pass


def _add_model_flags(p):
    g = p.add_argument_group("model and training")
    g.add_argument("--config", help="JSON file with RunConfig keys; flags override it")
    g.add_argument("--k", type=int, help="number of latent attributes (default 32)")
    g.add_argument("--s-theta", type=float, help="random-walk std of interaction entries")
    g.add_argument("--s-psi", type=float, help="random-walk std of node pre-attributes")
    g.add_argument("--sigma-theta", type=float, help="prior std of first interaction entries")
    g.add_argument("--sigma-psi", type=float, help="prior std of first pre-attributes")
    g.add_argument("--lr", type=float, help="Adam learning rate (default 0.01)")
    g.add_argument("--batches", type=int, help="number of training iterations")
    g.add_argument("--batch-size", type=int, help="nodes per batch, 0 = min(N, 256)")
    g.add_argument("--h0-scale", type=float, help="std of the initial variational means")
    g.add_argument("--seed", type=int)
    g.add_argument("--directed", action="store_true", default=None)
    g.add_argument("--clusters", type=int)


def _run_config(args) -> io.RunConfig:
    base = io.RunConfig.load(args.config).to_dict() if getattr(args, "config", None) else {}
    for flag, key in _CONFIG_FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            base[key] = value
    try:
        return io.RunConfig.from_dict(base)
    except (TypeError, ValueError) as exc:
        raise CLIError(f"invalid configuration: {exc}") from exc


def _load_snapshots(path, cfg):
    if not Path(path).exists():
        raise CLIError(f"no such file: {path}")
    directed = True if cfg.directed else None
    return io.parse_snapshots(path, directed=directed)


def cmd_simulate(args):
    cfg = _run_config(args)
    hp = cfg.hyperparams()
    seq, latent = sample_network(hp, args.nodes, args.t, seed=cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    io.write_snapshots(seq, out / "snapshots.txt")
    io.write_latent(latent, out / "latent.json")
    print(f"wrote {seq.horizon} snapshots of {seq.n_nodes} nodes to {out}")


def cmd_train(args):
    cfg = _run_config(args)
    seq = _load_snapshots(args.snapshots, cfg)
    cfg.directed = seq.directed
    horizon = args.horizon or seq.horizon
    data = seq.head(horizon)
    warm = None
    if args.warm_start:
        warm, _ = io.load_checkpoint(args.warm_start)
    net = train(data, cfg.hyperparams(), cfg.train_config(), warm_start=warm)
    cfg.input = str(args.snapshots)
    cfg.output = str(args.out)
    io.save_checkpoint(net, args.out, cfg, trained_horizon=horizon)
    print(f"trained on snapshots 1..{horizon}; final batch ELBO {net.history[-1]:.6g}")


def cmd_forecast(args):
    net, doc = io.load_checkpoint(args.checkpoint)
    horizon = args.horizon or doc.get("trained_horizon")
    if not horizon:
        raise CLIError("checkpoint has no trained_horizon; pass --horizon")
    P = forecast(net, int(horizon))
    io.write_matrix(P, args.out)
    print(f"wrote forecast for timestep {int(horizon) + 1} to {args.out}")


def cmd_evaluate(args):
    cfg = _run_config(args)
    seq = _load_snapshots(args.truth, cfg)
    t = args.t or seq.horizon
    if not 1 <= t <= seq.horizon:
        raise CLIError(f"timestep {t} outside 1..{seq.horizon}")
    if args.baseline == "bas":
        if t < 2:
            raise CLIError("the baseline needs at least one earlier snapshot")
        P = bas_baseline(seq.head(t - 1))
    elif args.probs:
        P = io.read_matrix(args.probs, shape=(seq.n_nodes, seq.n_nodes))
    else:
        raise CLIError("give --probs or --baseline bas")
    score = evaluate_forecast(P, seq[t - 1], directed=seq.directed)
    rows = [(t, score)]
    if args.out:
        io.write_report(rows, args.out)
    print("timestep,auc")
    print(f"{t},{score:.9g}")


def cmd_communities(args):
    cfg = _run_config(args)
    net, doc = io.load_checkpoint(args.checkpoint)
    horizon = doc.get("trained_horizon") or args.t
    if not 1 <= args.t <= horizon + 1:
        raise CLIError(f"timestep {args.t} outside 1..{horizon + 1}")
    z, theta = extract_embeddings(net, args.t)
    S = score_matrix(z[args.t - 1], theta[args.t - 1])
    result = community_detect(S, cfg.clusters, seed=cfg.seed, timestep=args.t)
    names = None
    if args.node_map:
        ids = io.read_node_map(args.node_map)
        names = [None] * net.n_nodes
        for label, idx in ids.items():
            names[idx] = label
    io.write_assignment(result.labels, args.out, names)
    print(f"wrote {cfg.clusters} communities for timestep {args.t} to {args.out}")


def cmd_run_experiment(args):
    cfg = _run_config(args)
    seq = _load_snapshots(args.snapshots, cfg)
    cfg.directed = seq.directed
    first = args.first or cfg.first or 2
    last = args.last or cfg.last or seq.horizon
    if not 2 <= first <= last <= seq.horizon:
        raise CLIError(f"need 2 <= first <= last <= {seq.horizon}, got {first}..{last}")
    hp = cfg.hyperparams()
    ckpt_dir = Path(args.checkpoint_dir) if args.checkpoint_dir else None
    if ckpt_dir:
        ckpt_dir.mkdir(parents=True, exist_ok=True)
    rows, bas_rows = [], []
    net = None
    for t in range(first, last + 1):
        data = seq.head(t - 1)
        net = train(data, hp, cfg.train_config(), warm_start=net)
        if ckpt_dir:
            io.save_checkpoint(net, ckpt_dir / f"horizon_{t - 1}.json", cfg, trained_horizon=t - 1)
        score = evaluate_forecast(forecast(net, t - 1), seq[t - 1], directed=seq.directed)
        rows.append((t, score))
        bas_rows.append((t, evaluate_forecast(bas_baseline(data), seq[t - 1], directed=seq.directed)))
        logger.info("timestep %d  auc %.4f  bas %.4f", t, score, bas_rows[-1][1])
    io.write_report(rows, args.out)
    if args.bas_out:
        io.write_report(bas_rows, args.bas_out)
    print("timestep,auc")
    for t, s in rows:
        print(f"{t},{s:.9g}")
    print(f"mean,{np.mean([s for _, s in rows]):.9g}")


def cmd_aggregate(args):
    events = io.read_events(args.events)
    seq, ids = io.aggregate_windows(events, args.width, args.start, args.windows,
                                    directed=bool(args.directed))
    io.write_snapshots(seq, args.out)
    if args.node_map:
        io.write_node_map(ids, args.node_map)
    print(f"wrote {seq.horizon} snapshots of {seq.n_nodes} nodes to {args.out}")


def build_parser():
    parser = argparse.ArgumentParser(prog="dlaim", description=__doc__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="draw a synthetic dynamic network")
    p.add_argument("--nodes", type=int, required=True)
    p.add_argument("--t", type=int, required=True, help="number of snapshots")
    p.add_argument("--out", required=True, help="output directory")
    _add_model_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", help="fit an inference network")
    p.add_argument("snapshots")
    p.add_argument("--horizon", type=int, help="train on snapshots 1..horizon")
    p.add_argument("--warm-start", help="checkpoint to initialize from")
    p.add_argument("--out", required=True, help="checkpoint path")
    _add_model_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("forecast", help="predict the next snapshot")
    p.add_argument("checkpoint")
    p.add_argument("--horizon", type=int)
    p.add_argument("--out", required=True, help="probability matrix CSV")
    p.set_defaults(func=cmd_forecast)

    p = sub.add_parser("evaluate", help="AUC of a forecast against an observed snapshot")
    p.add_argument("--truth", required=True, help="snapshot file")
    p.add_argument("--t", type=int, help="1-based timestep to score (default last)")
    p.add_argument("--probs", help="probability matrix CSV")
    p.add_argument("--baseline", choices=["bas"])
    p.add_argument("--out", help="report CSV")
    _add_model_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("communities", help="spectral communities from learned embeddings")
    p.add_argument("checkpoint")
    p.add_argument("--t", type=int, required=True, help="1-based timestep")
    p.add_argument("--node-map", help="JSON node map for labelled output")
    p.add_argument("--out", required=True)
    _add_model_flags(p)
    p.set_defaults(func=cmd_communities)

    p = sub.add_parser("run-experiment", help="rolling warm-started forecasting")
    p.add_argument("snapshots")
    p.add_argument("--first", type=int, help="first timestep to predict (>= 2)")
    p.add_argument("--last", type=int, help="last timestep to predict")
    p.add_argument("--out", required=True, help="report CSV")
    p.add_argument("--bas-out", help="also write the baseline's report here")
    p.add_argument("--checkpoint-dir")
    _add_model_flags(p)
    p.set_defaults(func=cmd_run_experiment)

    p = sub.add_parser("aggregate", help="bin a timestamped edge stream into snapshots")
    p.add_argument("events")
    p.add_argument("--width", type=float, required=True)
    p.add_argument("--start", type=float, default=0.0)
    p.add_argument("--windows", type=int, required=True)
    p.add_argument("--directed", action="store_true")
    p.add_argument("--node-map")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_aggregate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except (CLIError, io.FormatError, ValueError, OSError) as exc:
        print(f"dlaim {args.command}: error: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
