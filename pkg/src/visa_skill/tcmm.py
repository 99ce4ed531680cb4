"""Temporal context modeling with bidirectional LSTMs."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .diffcore import Parameter, Tensor, as_tensor, ops

# gate order inside the packed 4*D weight columns
GATES = ("input", "forget", "cell", "output")


class LstmDirection:
    def __init__(self, d_in: int, d_h: int, rng: np.random.Generator, prefix: str):
        s = 1.0 / np.sqrt(d_h)
        self.d_h = d_h
        self.w_x = Parameter(f"{prefix}.w_x", rng.uniform(-s, s, size=(d_in, 4 * d_h)))
        self.w_h = Parameter(f"{prefix}.w_h", rng.uniform(-s, s, size=(d_h, 4 * d_h)))
        b = np.zeros(4 * d_h)
        b[d_h:2 * d_h] = 1.0  # forget-gate bias
        self.b = Parameter(f"{prefix}.b", b)

    @property
    def params(self) -> list[Parameter]:
        return [self.w_x, self.w_h, self.b]


class BiLstm:
    def __init__(self, d_in: int, d_h: int, rng: np.random.Generator | None = None,
                 prefix: str = "lstm"):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.d_in = d_in
        self.d_h = d_h
        self.fwd = LstmDirection(d_in, d_h, rng, f"{prefix}.fwd")
        self.bwd = LstmDirection(d_in, d_h, rng, f"{prefix}.bwd")

    @property
    def params(self) -> list[Parameter]:
        return self.fwd.params + self.bwd.params


def lstm_direction(series: Tensor, p: LstmDirection, reverse: bool = False) -> Tensor:
    """Run one LSTM direction over (B, T, d_in) from zero states -> (B, T, D)."""
    B, T, _ = series.shape
    D = p.d_h
    xw = ops.matmul(series, p.w_x) + p.b  # (B, T, 4D)
    h = c = None
    outs: list[Tensor] = [None] * T
    steps = range(T - 1, -1, -1) if reverse else range(T)
    for t in steps:
        gates = xw[:, t, :]
        if h is not None:
            gates = gates + ops.matmul(h, p.w_h)
        s = ops.sigmoid(gates)
        i_g, f_g, o_g = s[:, 0:D], s[:, D:2 * D], s[:, 3 * D:4 * D]
        cand = ops.tanh(gates[:, 2 * D:3 * D])
        c = i_g * cand if c is None else f_g * c + i_g * cand
        h = o_g * ops.tanh(c)
        outs[t] = h
    return ops.stack(outs, axis=1)


def bilstm_run(series, params: BiLstm) -> Tensor:
    """Contexts [h_fwd_t; h_bwd_t] for a (…, T, d_in) series -> (…, T, 2D)."""
    x = as_tensor(series)
    if x.shape[-1] != params.d_in:
        raise ValueError(f"BiLSTM expects inputs of size {params.d_in}, got {x.shape[-1]}")
    lead = x.shape[:-2]
    T = x.shape[-2]
    x = x.reshape(-1, T, params.d_in)
    out = ops.concat([lstm_direction(x, params.fwd), lstm_direction(x, params.bwd, reverse=True)], axis=-1)
    return out.reshape(*lead, T, 2 * params.d_h)


def build_contexts(group_features, pooled, lstms: Sequence[BiLstm]) -> Tensor:
    """Stack the global context (slot 0) and one context per group.

    group_features: (…, T, K, C') or None when K == 0; pooled: (…, T, C);
    lstms[0] runs on ``pooled`` and lstms[k] on group k's series only.
    Returns (…, T, K+1, 2D).
    """
    pooled = as_tensor(pooled)
    K = 0 if group_features is None else group_features.shape[-2]
    if len(lstms) != K + 1:
        raise ValueError(f"need {K + 1} BiLSTMs for K={K}, got {len(lstms)}")
    slots = [bilstm_run(pooled, lstms[0])]
    for k in range(K):
        slots.append(bilstm_run(group_features[..., k, :], lstms[k + 1]))
    return ops.stack(slots, axis=-2)
