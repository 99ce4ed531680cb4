"""Score regression, heatmap prediction, and the composite training losses."""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .diffcore import Parameter, Tensor, as_tensor, ops

BCE_CLAMP = 1e-7


class ScoreHead:
    def __init__(self, d_in: int, rng: np.random.Generator | None = None, bias: float = 0.0,
                 prefix: str = "fs"):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.w = Parameter(f"{prefix}.w", rng.normal(0, 0.1 / np.sqrt(d_in), size=(d_in, 1)))
        self.b = Parameter(f"{prefix}.b", np.full(1, bias))

    @property
    def params(self) -> list[Parameter]:
        return [self.w, self.b]


def predict_score(contexts, head: ScoreHead) -> Tensor:
    """Temporal mean of the concatenated contexts (…, T, K+1, 2D), then a linear
    map to one score per video (shape (…))."""
    c = as_tensor(contexts)
    pooled = ops.mean(c, axis=-3)
    flat = pooled.reshape(*pooled.shape[:-2], 1, pooled.shape[-2] * pooled.shape[-1])
    out = ops.matmul(flat, head.w) + head.b
    return out.reshape(*pooled.shape[:-2])


def total_loss(s, s_hat, l_exist, lambda_exist: float = 10.0):
    """(s - s_hat)^2 + lambda * L_exist; works on floats or tensors."""
    return (s - s_hat) * (s - s_hat) + lambda_exist * l_exist


def total_loss_supervised(s, s_hat, l_exist, l_pos, lambda1: float = 10.0, lambda2: float = 20.0):
    return (s - s_hat) * (s - s_hat) + lambda1 * l_exist + lambda2 * l_pos


class HeatmapModule:
    """1x1 convolution C -> 1 followed by a logistic.

    With ``nonneg`` the effective weights are the elementwise squares of ``w``.
    On non-negative features the prediction is then monotone in P^m, so the
    module cannot mark tools by the absence of group m.
    """

    def __init__(self, C: int, rng: np.random.Generator | None = None, prefix: str = "hpm",
                 nonneg: bool = False):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.nonneg = nonneg
        self.w = Parameter(f"{prefix}.w", rng.normal(0, 1.0 / np.sqrt(C), size=(C, 1)))
        self.b = Parameter(f"{prefix}.b", np.zeros(1))

    @property
    def params(self) -> list[Parameter]:
        return [self.w, self.b]


def predict_heatmaps(X, P, m: int, hpm: HeatmapModule) -> Tensor:
    """Heatmaps (…, T, H, W) from the features of X re-weighted by group m's
    assignment probabilities."""
    X, P = as_tensor(X), as_tensor(P)
    K = P.shape[-1]
    if not 0 <= m < K:
        raise ValueError(f"supervised group m={m} outside [0, {K})")
    masked = X * P[..., m:m + 1]
    w = hpm.w * hpm.w if hpm.nonneg else hpm.w
    logits = ops.matmul(masked, w) + hpm.b
    return ops.sigmoid(logits).reshape(*X.shape[:-1])


def render_target_heatmaps(positions: Sequence[Sequence[tuple[float, float]]], H: int, W: int,
                           radius: float) -> np.ndarray:
    """Gaussian position targets (T, H, W).

    ``positions[t]`` lists (u, v) = (column, row) feature-map coordinates of the
    instruments visible at timestep t; overlapping blobs combine by maximum.
    """
    rows = np.arange(H, dtype=np.float64)[:, None]
    cols = np.arange(W, dtype=np.float64)[None, :]
    out = np.zeros((len(positions), H, W))
    for t, pts in enumerate(positions):
        for u, v in pts:
            blob = np.exp(-((rows - v) ** 2 + (cols - u) ** 2) / (2.0 * radius**2))
            np.maximum(out[t], blob, out=out[t])
    return out


def position_loss(H, H_hat) -> Tensor:
    """Mean binary cross-entropy over the last three axes (T, H, W)."""
    H = np.asarray(H.data if isinstance(H, Tensor) else H, dtype=np.float64)
    p = ops.clip(as_tensor(H_hat), BCE_CLAMP, 1.0 - BCE_CLAMP)
    bce = -(H * ops.log(p) + (1.0 - H) * ops.log(1.0 - p))
    return ops.mean(bce, axis=(-3, -2, -1))
