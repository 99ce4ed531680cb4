"""The synthetic benchmark used for the ablation checks.

One call to :func:`run` generates the seeded dataset (4 users x 8 trials,
64 frames of 64x64), cross-validates one model variant with 4 folds and
returns fold metrics, the Fisher-z aggregate and, for the grouped variant,
the held-out IoU of group m against the tool mask.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .diffcore import SgdConfig
from .evalkit import fisher_z_average
from .model import POOLED, VISA, LossWeights, ModelConfig
from .synthdata import SynthConfig, generate_dataset
from .training import FoldResult, cross_validate, group_tool_iou

SEEDS = (0, 1, 2)
N_USERS, TRIALS = 4, 8
SCHEME = "kfold:4"

DATA = SynthConfig(frame_size=64, frame_count=64)
MODEL = ModelConfig(K=3, C=16, c_hidden=8, c_out=16, d_h=8, T=8, centroid_init="kmeans")
SGD = SgdConfig(initial_lr=1e-3, decay_factor=0.1, decay_every_epochs=40, batch_size=4, epochs=40,
                method="adam")


@dataclass
class RunResult:
    variant: str
    supervised: bool
    seed: int
    folds: list[FoldResult]
    seconds: float
    ious: list[float] = field(default_factory=list)

    @property
    def aggregate(self) -> float:
        return fisher_z_average([f.corr for f in self.folds], strict=False)

    @property
    def mean_iou(self) -> float:
        return float(np.mean(self.ious)) if self.ious else float("nan")

    def summary(self) -> str:
        tag = self.variant + ("+sup" if self.supervised else "")
        folds = " ".join(f"{f.corr:.3f}" for f in self.folds)
        iou = f" iou={self.mean_iou:.3f}" if self.ious else ""
        return f"{tag} seed={self.seed} agg={self.aggregate:.3f} folds=[{folds}]{iou} time={self.seconds:.0f}s"


def dataset(seed: int):
    return generate_dataset(replace(DATA, seed=seed), N_USERS, TRIALS)[0]


def run(seed: int, variant: str = VISA, supervised: bool = False, epochs: int | None = None,
        episodes=None) -> RunResult:
    episodes = dataset(seed) if episodes is None else episodes
    model = replace(MODEL, variant=variant, supervise_positions=supervised)
    sgd = SGD if epochs is None else replace(SGD, epochs=epochs, decay_every_epochs=max(1, epochs))
    start = time.perf_counter()

    def hook(fold, m, held_out):
        return {"iou": group_tool_iou(m, held_out)} if m.codebook is not None else {}

    folds = cross_validate(episodes, SCHEME, model, sgd, LossWeights(), seed=seed, fold_hook=hook)
    ious = [f.extras["iou"] for f in folds if "iou" in f.extras]
    return RunResult(variant, supervised, seed, folds, time.perf_counter() - start, ious)


__all__ = ["DATA", "MODEL", "POOLED", "SEEDS", "SGD", "VISA", "RunResult", "dataset", "run"]
