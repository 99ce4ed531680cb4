"""Minibatch training, prediction and per-fold cross-validation."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.cluster.vq import kmeans2

from .diffcore import SgdConfig, backward, learning_rate, no_grad, sgd_step
from .evalkit import make_splits, mae, spearman
from .fem import EVAL, TRAIN, gather_snippets, plan_snippets
from .heads import render_target_heatmaps
from .model import LossWeights, ModelConfig, SkillModel
from .sgm import hard_assignment
from .synthdata import SCORE_MAX, SCORE_MIN, Episode

log = logging.getLogger(__name__)

SCORE_SPAN = SCORE_MAX - SCORE_MIN


def normalize_score(s):
    return (np.asarray(s, dtype=np.float64) - SCORE_MIN) / SCORE_SPAN


def denormalize_score(s):
    return np.asarray(s, dtype=np.float64) * SCORE_SPAN + SCORE_MIN


@dataclass
class EpochLog:
    epoch: int
    lr: float
    total: float
    mse: float
    exist: float
    pos: float

    def line(self) -> str:
        return (f"epoch={self.epoch} lr={self.lr:.6g} loss={self.total!r} mse={self.mse!r} "
                f"exist={self.exist!r} pos={self.pos!r}")


def _prepare(frames: np.ndarray, norm: str) -> np.ndarray:
    x = frames.astype(np.float64) / 255.0
    if norm == "video":
        std = x.std()
        x = (x - x.mean()) / (std if std > 0 else 1.0)
    return x


class VideoBatcher:
    """Turns episodes into model inputs (snippets, normalized scores, heatmaps)."""

    def __init__(self, episodes: Sequence[Episode], config: ModelConfig):
        self.episodes = list(episodes)
        self.config = config
        self._frames = [_prepare(ep.frames, config.input_norm) for ep in self.episodes]

    def feature_hw(self, ep_index: int = 0) -> tuple[int, int]:
        _, h, w = self.episodes[ep_index].frames.shape
        return self.config.extractor_config().output_hw(h, w)

    def plan(self, i: int, mode: str, seed: int | None = None):
        ep = self.episodes[i]
        return plan_snippets(ep.frame_count, self.config.T, self.config.snippet_len, mode, seed)

    def snippets(self, i: int, plan) -> np.ndarray:
        return gather_snippets(self._frames[i], plan)

    def tool_positions(self, i: int, plan) -> list[list[tuple[float, float]]]:
        """Per-timestep tool positions in feature-map coordinates (snippet mean)."""
        ep = self.episodes[i]
        _, h, w = ep.frames.shape
        fh, fw = self.feature_hw(i)
        sy, sx = h / fh, w / fw
        out = []
        for idx in plan.frame_indices():
            pos = ep.tool_tracks[idx].mean(axis=0)  # (tools, 2)
            out.append([((u + 0.5) / sx - 0.5, (v + 0.5) / sy - 0.5) for u, v in pos])
        return out

    def heatmaps(self, i: int, plan) -> np.ndarray:
        fh, fw = self.feature_hw(i)
        return render_target_heatmaps(self.tool_positions(i, plan), fh, fw, self.config.target_radius)

    def tool_mask(self, i: int, plan) -> np.ndarray:
        """Feature-map cells within target_radius of any tool, per timestep."""
        fh, fw = self.feature_hw(i)
        rows = np.arange(fh)[:, None]
        cols = np.arange(fw)[None, :]
        positions = self.tool_positions(i, plan)
        mask = np.zeros((len(positions), fh, fw), dtype=bool)
        for t, pts in enumerate(positions):
            for u, v in pts:
                mask[t] |= (rows - v) ** 2 + (cols - u) ** 2 <= self.config.target_radius**2
        return mask

    def batch(self, indices: Sequence[int], mode: str, seeds: Sequence[int] | None = None):
        plans = [self.plan(i, mode, None if seeds is None else seeds[k]) for k, i in enumerate(indices)]
        x = np.stack([self.snippets(i, p) for i, p in zip(indices, plans)])
        s = normalize_score([self.episodes[i].score for i in indices])
        hm = None
        if self.config.supervise_positions:
            hm = np.stack([self.heatmaps(i, p) for i, p in zip(indices, plans)])
        return x, s, hm, plans


def _snippet_seed(seed: int, epoch: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, epoch, index]).generate_state(1)[0])


def init_centroids_kmeans(model: SkillModel, episodes: Sequence[Episode], seed: int = 0,
                          batch_size: int = 8) -> None:
    """Place the centroids at k-means centers of the eval-mode local features.

    With position supervision, centroid m starts at the mean feature inside
    the tool mask and the other K-1 are fitted to the features outside it.
    """
    if model.codebook is None:
        return
    batcher = VideoBatcher(episodes, model.config)
    feats = []
    with no_grad():
        for start in range(0, len(episodes), batch_size):
            idx = list(range(start, min(start + batch_size, len(episodes))))
            x, _, _, _ = batcher.batch(idx, EVAL)
            feats.append(model.extractor(x).data.reshape(-1, model.config.C))
    data = np.concatenate(feats)
    K, m = model.codebook.K, model.config.m
    centers = np.empty((K, model.config.C))
    rest = np.ones(len(data), dtype=bool)
    free = list(range(K))
    if model.config.supervise_positions:
        rest = ~np.concatenate([batcher.tool_mask(i, batcher.plan(i, EVAL)).reshape(-1)
                                for i in range(len(episodes))])
        if not rest.all():
            centers[m] = data[~rest].mean(axis=0)
            free.remove(m)
    if free:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # an empty cluster keeps its ++ seed
            centers[free], _ = kmeans2(data[rest], len(free), minit="++", seed=np.random.default_rng(seed))
    model.codebook.centroids.data = centers


def train(model: SkillModel, episodes: Sequence[Episode], sgd: SgdConfig,
          weights: LossWeights = LossWeights(), seed: int = 0,
          on_epoch: Callable[[EpochLog], None] | None = None) -> list[EpochLog]:
    """Run ``sgd.epochs`` epochs of shuffled minibatch SGD; returns per-epoch logs.

    Logged losses are means over the epoch's minibatches.
    """
    if model.config.centroid_init == "kmeans":
        init_centroids_kmeans(model, episodes, seed)
    batcher = VideoBatcher(episodes, model.config)
    params = model.parameters()
    rng = np.random.default_rng(seed)
    velocity: dict[str, np.ndarray] = {}
    history = []
    n = len(episodes)
    for epoch in range(sgd.epochs):
        order = rng.permutation(n)
        sums = {"total": 0.0, "mse": 0.0, "exist": 0.0, "pos": 0.0}
        batches = 0
        for start in range(0, n, sgd.batch_size):
            idx = [int(i) for i in order[start:start + sgd.batch_size]]
            seeds = [_snippet_seed(seed, epoch, i) for i in idx]
            x, s, hm, _ = batcher.batch(idx, TRAIN, seeds)
            out = model(x)
            loss, comps = model.loss(out, s, weights, hm)
            backward(loss)
            sgd_step(params, epoch, sgd, velocity)
            for key in sums:
                sums[key] += comps[key]
            batches += 1
        entry = EpochLog(epoch, learning_rate(epoch, sgd), *(sums[k] / batches for k in ("total", "mse", "exist", "pos")))
        history.append(entry)
        log.debug(entry.line())
        if on_epoch is not None:
            on_epoch(entry)
    return history


def predict(model: SkillModel, episodes: Sequence[Episode], batch_size: int = 8) -> np.ndarray:
    """Eval-mode scores in the original [6, 30] units."""
    batcher = VideoBatcher(episodes, model.config)
    preds = []
    with no_grad():
        for start in range(0, len(episodes), batch_size):
            idx = list(range(start, min(start + batch_size, len(episodes))))
            x, _, _, _ = batcher.batch(idx, EVAL)
            preds.append(model(x).score.data.reshape(-1))
    return denormalize_score(np.concatenate(preds)) if preds else np.zeros(0)


def assignment_maps(model: SkillModel, episodes: Sequence[Episode]) -> list[np.ndarray]:
    """Hard assignment maps (T, H, W) per episode, eval-mode snippets."""
    if model.codebook is None:
        raise ValueError("the pooled baseline has no semantic groups")
    batcher = VideoBatcher(episodes, model.config)
    maps = []
    with no_grad():
        for i in range(len(episodes)):
            x, _, _, _ = batcher.batch([i], EVAL)
            maps.append(hard_assignment(model(x).P)[0])
    return maps


def group_tool_iou(model: SkillModel, episodes: Sequence[Episode], group: int | None = None) -> float:
    """Mean over episodes and timesteps of IoU(hard assignment == group, tool mask)."""
    group = model.config.m if group is None else group
    batcher = VideoBatcher(episodes, model.config)
    ious = []
    for i, labels in enumerate(assignment_maps(model, episodes)):
        mask = batcher.tool_mask(i, batcher.plan(i, EVAL))
        pred = labels == group
        for t in range(mask.shape[0]):
            union = np.logical_or(pred[t], mask[t]).sum()
            inter = np.logical_and(pred[t], mask[t]).sum()
            ious.append(inter / union if union else 1.0)
    return float(np.mean(ious))


@dataclass
class FoldResult:
    fold: int
    corr: float
    mae: float
    predictions: np.ndarray
    targets: np.ndarray
    extras: dict = field(default_factory=dict)


Predictor = Callable[[Sequence[Episode], Sequence[Episode], int], np.ndarray]


def cross_validate(episodes: Sequence[Episode], scheme: str, model_config: ModelConfig,
                   sgd: SgdConfig, weights: LossWeights = LossWeights(), seed: int = 0,
                   init_state: dict | None = None, predictor: Predictor | None = None,
                   fold_hook: Callable[[int, SkillModel, Sequence[Episode]], dict] | None = None,
                   ) -> list[FoldResult]:
    """Train a fresh model per fold on the other folds and score the held-out one.

    Every fold starts from ``init_state`` when given (else from ``seed``).
    ``predictor(train_eps, test_eps, fold)`` replaces training entirely, which
    is how stub predictors are plugged in.  ``fold_hook`` may compute extra
    per-fold diagnostics from the trained model.
    """
    manifest = [{"user_id": e.user_id, "supertrial_id": e.supertrial_id} for e in episodes]
    split = make_splits(manifest, scheme, seed)
    results = []
    for fold in range(split.n_folds):
        tr = [episodes[i] for i in split.train_members(fold)]
        te = [episodes[i] for i in split.fold_members(fold)]
        extras = {}
        if predictor is not None:
            preds = np.asarray(predictor(tr, te, fold), dtype=np.float64)
        else:
            model = SkillModel(model_config, seed=seed)
            if init_state is not None:
                model.load_state(init_state)
            train(model, tr, sgd, weights, seed=seed + 1000 * (fold + 1))
            preds = predict(model, te)
            if fold_hook is not None:
                extras = fold_hook(fold, model, te)
        targets = np.array([e.score for e in te])
        results.append(FoldResult(fold, spearman(preds, targets), mae(preds, targets), preds, targets, extras))
        log.info("fold=%d corr=%.4f mae=%.4f", fold, results[-1].corr, results[-1].mae)
    return results
