"""Gated recurrent unit without bias terms.

Row-vector convention: a batch of hidden states is an ``(n, k)`` matrix
and inputs are ``(n, d_in)``, so ``W1, W3, W5`` are ``d_in x k`` and
``W2, W4, W6`` are ``k x k``::

    z  = sigmoid(x W1 + h W2)          update gate
    r  = sigmoid(x W3 + h W4)          reset gate
    hc = tanh(x W5 + r * (h W6))       candidate
    h' = z * h + (1 - z) * hc

The same functions accept numpy arrays or tape variables.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Any

import numpy as np

from . import autodiff as ad

__all__ = ["GruParams", "gru_step", "gru_unroll", "init_gru"]

WEIGHT_NAMES = ("W1", "W2", "W3", "W4", "W5", "W6")


@dataclass
class GruParams:
    W1: Any
    W2: Any
    W3: Any
    W4: Any
    W5: Any
    W6: Any
    h0: Any

    def __post_init__(self):
        d_in, k = self.W1.shape
        for name in ("W3", "W5"):
            if getattr(self, name).shape != (d_in, k):
                raise ValueError(f"{name} must be {(d_in, k)}, got {getattr(self, name).shape}")
        for name in ("W2", "W4", "W6"):
            if getattr(self, name).shape != (k, k):
                raise ValueError(f"{name} must be {(k, k)}, got {getattr(self, name).shape}")
        if self.h0.shape[-1] != k:
            raise ValueError(f"h0 trailing dim must be {k}, got {self.h0.shape}")

    @property
    def input_dim(self) -> int:
        return self.W1.shape[0]

    @property
    def hidden_dim(self) -> int:
        return self.W1.shape[1]

    def items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


def init_gru(d_in, k, h0_shape=None, rng=None, scale=0.1) -> GruParams:
    """Weights uniform in ``[-scale, scale]``; ``h0`` zeros."""
    rng = np.random.default_rng(rng)
    ws = {name: rng.uniform(-scale, scale, size=(d_in if name in ("W1", "W3", "W5") else k, k))
          for name in WEIGHT_NAMES}
    h0 = np.zeros(h0_shape if h0_shape is not None else (k,))
    return GruParams(h0=h0, **ws)


def gru_step(params: GruParams, h_prev, x=None):
    """One GRU update; ``h_prev`` is ``(k,)`` or ``(n, k)``.

    ``x=None`` stands for the all-zeros input.  The input projections are
    then skipped, which is exact: they would add zeros and their weights
    would receive zero gradient anyway.
    """
    k = params.hidden_dim
    if h_prev.shape[-1] != k:
        raise ValueError(f"hidden state has trailing dim {h_prev.shape[-1]}, expected {k}")
    if x is not None and x.shape[-1] != params.input_dim:
        raise ValueError(f"input has trailing dim {x.shape[-1]}, expected {params.input_dim}")
    squeeze = h_prev.ndim == 1
    if squeeze:
        h_prev = ad.reshape(h_prev, (1, k))
        if x is not None:
            x = ad.reshape(x, (1, params.input_dim))
    if x is None:
        z = ad.sigmoid(h_prev @ params.W2)
        r = ad.sigmoid(h_prev @ params.W4)
        h_cand = ad.tanh(r * (h_prev @ params.W6))
    else:
        z = ad.sigmoid(x @ params.W1 + h_prev @ params.W2)
        r = ad.sigmoid(x @ params.W3 + h_prev @ params.W4)
        h_cand = ad.tanh(x @ params.W5 + r * (h_prev @ params.W6))
    h = z * h_prev + (1.0 - z) * h_cand
    if squeeze:
        h = ad.reshape(h, (k,))
    return h


def gru_unroll(params: GruParams, steps: int, inputs=None, h0=None, step_fn=None):
    """Run ``steps`` GRU updates from ``h0`` (default ``params.h0``).

    Returns the list ``[h^(1), ..., h^(steps)]``.  ``inputs`` defaults to
    zero vectors; otherwise it is a sequence of ``steps`` input arrays.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    step_fn = step_fn or gru_step
    h = params.h0 if h0 is None else h0
    if inputs is None:
        inputs = [None] * steps
    elif len(inputs) != steps:
        raise ValueError(f"got {len(inputs)} inputs for {steps} steps")
    out = []
    for x in inputs:
        h = step_fn(params, h, x)
        out.append(h)
    return out
