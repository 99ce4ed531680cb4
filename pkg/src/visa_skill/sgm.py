"""Semantic grouping: soft assignment of local features to K learnable
centroids, per-group residual aggregation, and the group-existence penalty."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .betadist import quantile_targets
from .diffcore import Parameter, Tensor, as_tensor, ops


MIN_MASS = 1e-12


class GroupCodebook:
    """K centroids in feature space plus one smoothing factor per group.

    The smoothing factor is ``sigma = logistic(sigma_raw)`` so it stays in (0, 1).
    """

    def __init__(self, K: int, C: int, rng: np.random.Generator | None = None,
                 init_std: float = 0.5, prefix: str = "sgm"):
        if K < 1 or C < 1:
            raise ValueError("K and C must be positive")
        rng = rng if rng is not None else np.random.default_rng(0)
        self.centroids = Parameter(f"{prefix}.centroids", rng.normal(0.0, init_std, size=(K, C)))
        self.sigma_raw = Parameter(f"{prefix}.sigma_raw", np.zeros(K))

    @property
    def K(self) -> int:
        return self.centroids.shape[0]

    @property
    def C(self) -> int:
        return self.centroids.shape[1]

    @property
    def params(self) -> list[Parameter]:
        return [self.centroids, self.sigma_raw]

    def sigma(self) -> Tensor:
        return ops.sigmoid(self.sigma_raw)


def assign(X, codebook: GroupCodebook, stabilize: bool = True) -> Tensor:
    """Soft assignment probabilities P (…, K) for local features X (…, C).

    P_k ∝ exp(-||(x - d_k) / sigma_k||^2), normalized over k.  With ``stabilize``
    the per-position maximum exponent is subtracted first; the shift is treated
    as a constant, which is exact because the normalization cancels it.
    """
    X = as_tensor(X)
    if X.shape[-1] != codebook.C:
        raise ValueError(f"features have {X.shape[-1]} channels, codebook has {codebook.C}")
    diff = X.reshape(*X.shape[:-1], 1, X.shape[-1]) - codebook.centroids
    sq = ops.sum(ops.square(diff), axis=-1)
    sigma = codebook.sigma()
    expo = -(sq / ops.square(sigma))
    if stabilize:
        expo = expo - expo.data.max(axis=-1, keepdims=True)
    e = ops.exp(expo)
    return e / ops.sum(e, axis=-1, keepdims=True)


def hard_assignment(P) -> np.ndarray:
    """Per-position argmax over groups (ties go to the lowest group index)."""
    data = P.data if isinstance(P, Tensor) else np.asarray(P)
    return np.argmax(data, axis=-1)


def aggregate(X, P, codebook: GroupCodebook, eps: float = 1e-8) -> Tensor:
    """Unit-norm residuals z (…, T, K, C) between the assignment-weighted mean
    feature of each group and its centroid, scaled by 1/sigma_k before
    normalizing.  Residuals with norm below ``eps`` become exact zeros."""
    X, P = as_tensor(X), as_tensor(P)
    *lead, T, H, W, C = X.shape
    K = P.shape[-1]
    Xf = X.reshape(*lead, T, H * W, C)
    Pf = P.reshape(*lead, T, H * W, K)
    num = ops.matmul(ops.transpose(Pf, _swap_last(Pf.ndim)), Xf)  # (…, T, K, C)
    den = ops.sum(Pf, axis=-2).reshape(*lead, T, K, 1)
    # softmax mass can underflow to 0 for a group far from every feature
    mean = num / ops.clip(den, MIN_MASS, np.inf)
    sigma = codebook.sigma().reshape(K, 1)
    zp = (mean - codebook.centroids) / sigma
    return ops.l2_normalize(zp, axis=-1, eps=eps)


def _swap_last(ndim: int) -> tuple[int, ...]:
    axes = list(range(ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return tuple(axes)


class GroupTransform:
    """f_g: two linear maps with a ReLU between, shared over time and groups."""

    def __init__(self, c_in: int, c_mid: int, c_out: int, rng: np.random.Generator | None = None,
                 prefix: str = "fg"):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.w1 = Parameter(f"{prefix}.w1", rng.normal(0, np.sqrt(2.0 / c_in), size=(c_in, c_mid)))
        self.b1 = Parameter(f"{prefix}.b1", np.zeros(c_mid))
        self.w2 = Parameter(f"{prefix}.w2", rng.normal(0, np.sqrt(1.0 / c_mid), size=(c_mid, c_out)))
        self.b2 = Parameter(f"{prefix}.b2", np.zeros(c_out))

    @property
    def params(self) -> list[Parameter]:
        return [self.w1, self.b1, self.w2, self.b2]


def group_transform(z, fg: GroupTransform) -> Tensor:
    z = as_tensor(z)
    if z.shape[-1] != fg.w1.shape[0]:
        raise ValueError(f"group transform expects {fg.w1.shape[0]} inputs, got {z.shape[-1]}")
    hidden = ops.relu(ops.matmul(z, fg.w1) + fg.b1)
    return ops.matmul(hidden, fg.w2) + fg.b2


@dataclass(frozen=True)
class ExistenceRegConfig:
    alpha: float = 1.0
    beta: float = 0.001
    epsilon: float = 1e-6

    def __post_init__(self):
        if self.alpha <= 0 or self.beta <= 0 or self.epsilon <= 0:
            raise ValueError("alpha, beta and epsilon must be positive")


def existence_loss(P, config: ExistenceRegConfig = ExistenceRegConfig()) -> Tensor:
    """Quantile-matching penalty on each group's per-timestep peak probability.

    For group k the peaks max_ij P[t, i, j, k] are sorted ascending over t and
    compared, in log space, with the Beta(alpha, beta) quantiles at
    (2i - 1) / (2T).  Absolute log differences are summed over i and k.
    P has shape (…, T, H, W, K); the result has the leading shape (…).
    """
    P = as_tensor(P)
    *lead, T, H, W, K = P.shape
    peaks, _ = ops.max_argmax(P.reshape(*lead, T, H * W, K), axis=-2)  # (…, T, K)
    ordered, _ = ops.sort(peaks, axis=-2)
    eps = config.epsilon
    target = np.log(np.array(quantile_targets(T, config.alpha, config.beta)) + eps).reshape(T, 1)
    gap = ops.absolute(ops.log(ordered + eps) - target)
    return ops.sum(gap, axis=(-2, -1))
