"""End-to-end skill-score model: extractor, grouping, BiLSTM contexts, heads."""

from __future__ import annotations

import contextlib
from dataclasses import dataclass, field

import numpy as np

from .diffcore import NonFiniteError, Parameter, Tensor, as_tensor, ops
from .fem import ExtractorConfig, FeatureExtractor, global_pool
from .heads import HeatmapModule, ScoreHead, position_loss, predict_heatmaps, predict_score
from .sgm import (ExistenceRegConfig, GroupCodebook, GroupTransform, aggregate, assign,
                  existence_loss, group_transform)
from .tcmm import BiLstm, build_contexts

VISA = "visa"
POOLED = "pooled-baseline"


@dataclass(frozen=True)
class ModelConfig:
    K: int = 3
    C: int = 32  # channels of the feature volume
    c_hidden: int = 8  # channels after the first conv block
    c_mid: int | None = None  # hidden width of f_g; None means C
    c_out: int = 32  # C', group feature width
    d_h: int = 32  # BiLSTM hidden size
    T: int = 32
    snippet_len: int = 4
    in_channels: int = 1
    variant: str = VISA
    supervise_positions: bool = False
    m: int = 1
    target_radius: float = 1.5
    centroid_init_std: float = 0.5
    score_bias_init: float = 0.5
    centroid_init: str = "normal"  # or "kmeans": fitted to training features before the first epoch
    input_norm: str = "video"  # or "none": per-video zero-mean, unit-variance frames
    hpm_weights: str = "nonneg"  # or "free": plain 1x1 conv weights in the heatmap module

    def __post_init__(self):
        if self.variant not in (VISA, POOLED):
            raise ValueError(f"unknown variant {self.variant!r}")
        if self.centroid_init not in ("normal", "kmeans"):
            raise ValueError(f"unknown centroid_init {self.centroid_init!r}")
        if self.input_norm not in ("video", "none"):
            raise ValueError(f"unknown input_norm {self.input_norm!r}")
        if self.hpm_weights not in ("nonneg", "free"):
            raise ValueError(f"unknown hpm_weights {self.hpm_weights!r}")
        if self.variant == VISA and self.K < 1:
            raise ValueError("the visa variant needs K >= 1")
        if self.supervise_positions and self.variant != VISA:
            raise ValueError("position supervision needs the visa variant")
        if self.supervise_positions and not 0 <= self.m < self.K:
            raise ValueError(f"supervised group m={self.m} outside [0, {self.K})")

    @property
    def groups(self) -> int:
        """Number of per-group streams actually built (0 for the pooled baseline)."""
        return self.K if self.variant == VISA else 0

    def extractor_config(self) -> ExtractorConfig:
        return ExtractorConfig.two_block(self.snippet_len, self.c_hidden, self.C, self.in_channels)


@dataclass(frozen=True)
class LossWeights:
    lambda_exist: float = 10.0
    lambda1: float = 10.0
    lambda2: float = 20.0
    exist: ExistenceRegConfig = field(default_factory=ExistenceRegConfig)


@dataclass
class Outputs:
    X: Tensor
    score: Tensor
    P: Tensor | None = None
    z: Tensor | None = None
    g: Tensor | None = None
    contexts: Tensor | None = None
    heatmaps: Tensor | None = None


class SkillModel:
    """Holds every parameter group and wires the forward pass.

    Inputs are snippet arrays (B, T, L, H, W, Cin) or a single video
    (T, L, H, W, Cin).  Scores are predicted in normalized units.
    """

    def __init__(self, config: ModelConfig, seed: int = 0):
        self.config = config
        rng = np.random.default_rng(seed)
        self.extractor = FeatureExtractor(config.extractor_config(), rng)
        C, K = config.C, config.groups
        self.codebook = self.fg = None
        if K:
            self.codebook = GroupCodebook(K, C, rng, init_std=config.centroid_init_std)
            self.fg = GroupTransform(C, config.c_mid or C, config.c_out, rng)
        self.lstms = [BiLstm(C, config.d_h, rng, prefix="lstm0")]
        self.lstms += [BiLstm(config.c_out, config.d_h, rng, prefix=f"lstm{k + 1}") for k in range(K)]
        self.head = ScoreHead((K + 1) * 2 * config.d_h, rng, bias=config.score_bias_init)
        self.hpm = None
        if config.supervise_positions:
            self.hpm = HeatmapModule(C, rng, nonneg=config.hpm_weights == "nonneg")

    # -- parameters ---------------------------------------------------------

    def parameter_groups(self) -> dict[str, list[Parameter]]:
        groups = {"extractor": list(self.extractor.params)}
        if self.codebook is not None:
            groups["codebook"] = self.codebook.params
            groups["f_g"] = self.fg.params
        groups["bilstm"] = [p for l in self.lstms for p in l.params]
        groups["f_s"] = self.head.params
        if self.hpm is not None:
            groups["f_hpm"] = self.hpm.params
        return groups

    def parameters(self) -> list[Parameter]:
        return [p for ps in self.parameter_groups().values() for p in ps]

    def state(self) -> dict[str, np.ndarray]:
        return {p.name: p.data for p in self.parameters()}

    def load_state(self, state: dict[str, np.ndarray], strict: bool = True) -> None:
        params = {p.name: p for p in self.parameters()}
        if strict:
            missing = sorted(set(params) - set(state))
            extra = sorted(set(state) - set(params))
            if missing or extra:
                raise KeyError(f"checkpoint mismatch: missing={missing} unexpected={extra}")
        for name, p in params.items():
            if name not in state:
                continue
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"shape mismatch for {name}: checkpoint {arr.shape}, model {p.shape}")
            p.data = arr.copy()

    # -- forward ------------------------------------------------------------

    def forward(self, snippets) -> Outputs:
        with _component("forward"):
            return self._forward(snippets)

    def _forward(self, snippets) -> Outputs:
        X = self.extractor(as_tensor(snippets))
        pooled = global_pool(X)
        if self.codebook is None:
            contexts = build_contexts(None, pooled, self.lstms)
            return Outputs(X=X, score=predict_score(contexts, self.head), contexts=contexts)
        P = assign(X, self.codebook)
        z = aggregate(X, P, self.codebook)
        g = group_transform(z, self.fg)
        contexts = build_contexts(g, pooled, self.lstms)
        out = Outputs(X=X, score=predict_score(contexts, self.head), P=P, z=z, g=g, contexts=contexts)
        if self.hpm is not None:
            out.heatmaps = predict_heatmaps(X, P, self.config.m, self.hpm)
        return out

    __call__ = forward

    def loss(self, out: Outputs, scores, weights: LossWeights, target_heatmaps=None
             ) -> tuple[Tensor, dict[str, float]]:
        """Batch-mean training loss and its components (as floats).

        Without a codebook the existence term is identically zero; with
        position supervision the L' weighting replaces lambda_exist.
        """
        s = np.asarray(scores, dtype=np.float64).reshape(out.score.shape)
        with _component("mse"):
            err = out.score - s
            mse = ops.mean(err * err)
        comps = {"mse": mse.item(), "exist": 0.0, "pos": 0.0}
        if out.P is None:
            total = mse
            comps["total"] = total.item()
            return total, comps
        with _component("exist"):
            l_exist = ops.mean(existence_loss(out.P, weights.exist))
        comps["exist"] = l_exist.item()
        with _component("total"):
            if out.heatmaps is not None:
                if target_heatmaps is None:
                    raise ValueError("position supervision needs target heatmaps")
                with _component("pos"):
                    l_pos = ops.mean(position_loss(target_heatmaps, out.heatmaps))
                comps["pos"] = l_pos.item()
                total = mse + weights.lambda1 * l_exist + weights.lambda2 * l_pos
            else:
                total = mse + weights.lambda_exist * l_exist
        comps["total"] = total.item()
        return total, comps


class NonFiniteLossError(NonFiniteError):
    """A loss component (or the forward pass feeding it) went non-finite."""

    def __init__(self, component: str, op: str):
        self.component = component
        FloatingPointError.__init__(self, f"non-finite value in loss component '{component}' (op '{op}')")
        self.op = op


@contextlib.contextmanager
def _component(name: str):
    try:
        yield
    except NonFiniteLossError:
        raise
    except NonFiniteError as exc:
        raise NonFiniteLossError(name, exc.op) from exc
