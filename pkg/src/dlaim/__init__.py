"""Dynamic latent attribute interaction model with GRU-based variational inference."""

from .evaluation import auc, bas_baseline, community_detect, evaluate_forecast, score_matrix
from .inference import (InferenceNetwork, TrainConfig, extract_embeddings, forecast, train,
                        unroll_variational)
from .model import (Hyperparams, LatentTrajectory, SnapshotSequence, edge_probability,
                    pairwise_logit, sample_network)

__version__ = "0.1.0"

__all__ = [
    "Hyperparams",
    "SnapshotSequence",
    "LatentTrajectory",
    "pairwise_logit",
    "edge_probability",
    "sample_network",
    "InferenceNetwork",
    "TrainConfig",
    "unroll_variational",
    "train",
    "forecast",
    "extract_embeddings",
    "auc",
    "bas_baseline",
    "evaluate_forecast",
    "score_matrix",
    "community_detect",
]
