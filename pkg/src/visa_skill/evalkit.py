"""Rank correlation, MAE, Fisher-z averaging and cross-validation splits."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

LOSO, LOUO, KFOLD = "loso", "louo", "kfold"


class UndefinedCorrelationError(ValueError):
    """Rank correlation of a constant sequence."""


def rankdata(xs: Sequence[float]) -> np.ndarray:
    """1-based ranks with ties given their average rank."""
    x = np.asarray(xs, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x))
    sorted_x = x[order]
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and sorted_x[j + 1] == sorted_x[i]:
            j += 1
        ranks[order[i:j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation of average ranks."""
    if len(xs) != len(ys):
        raise ValueError("spearman needs sequences of equal length")
    if len(xs) < 2:
        raise ValueError("spearman needs at least two points")
    rx, ry = rankdata(xs), rankdata(ys)
    dx, dy = rx - rx.mean(), ry - ry.mean()
    sxx, syy = float(dx @ dx), float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("rank correlation is undefined for constant input")
    rho = float(dx @ dy) / math.sqrt(sxx * syy)
    return max(-1.0, min(1.0, rho))


def mae(predictions: Sequence[float], targets: Sequence[float]) -> float:
    p, t = np.asarray(predictions, dtype=np.float64), np.asarray(targets, dtype=np.float64)
    if p.shape != t.shape or p.size == 0:
        raise ValueError("mae needs two non-empty sequences of equal length")
    return float(np.abs(p - t).mean())


def fisher_z_average(rhos: Sequence[float], strict: bool = True) -> float:
    """tanh of the mean atanh of the correlations.

    Strict mode rejects |rho| >= 1.  Otherwise |rho| == 1 is taken at its limit
    (a single perfect fold pins the average to that sign); opposite perfect
    correlations together are still an error.
    """
    r = [float(x) for x in rhos]
    if not r:
        raise ValueError("no correlations to average")
    if any(abs(x) > 1 for x in r):
        raise ValueError("correlations must lie in [-1, 1]")
    boundary = [x for x in r if abs(x) == 1.0]
    if boundary:
        if strict:
            raise ValueError("Fisher z is infinite for |rho| = 1")
        if len(set(boundary)) > 1:
            raise UndefinedCorrelationError("both +1 and -1 correlations present; z average is undefined")
        return boundary[0]
    return math.tanh(sum(math.atanh(x) for x in r) / len(r))


@dataclass(frozen=True)
class SplitScheme:
    kind: str
    k: int | None
    folds: tuple[int, ...]  # fold index of each episode

    @property
    def n_folds(self) -> int:
        return max(self.folds) + 1 if self.folds else 0

    def fold_members(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.folds) if f == fold]

    def train_members(self, fold: int) -> list[int]:
        return [i for i, f in enumerate(self.folds) if f != fold]


def parse_scheme(text: str) -> tuple[str, int | None]:
    text = text.strip().lower()
    if text in (LOSO, LOUO):
        return text, None
    if text.startswith(KFOLD):
        _, _, k = text.partition(":")
        k = int(k) if k else 4
        if k < 2:
            raise ValueError("kfold needs k >= 2")
        return KFOLD, k
    raise ValueError(f"unknown split scheme {text!r} (expected loso, louo or kfold:<k>)")


def make_splits(manifest: Sequence[Mapping], scheme: str, seed: int = 0) -> SplitScheme:
    """Fold assignment for every manifest entry.

    ``manifest`` items need ``user_id`` / ``supertrial_id`` for LOUO / LOSO.
    Group folds are numbered by sorted group value; k-fold shuffles with the
    seed and cuts contiguous near-equal blocks.
    """
    kind, k = parse_scheme(scheme)
    n = len(manifest)
    if kind in (LOUO, LOSO):
        key = "user_id" if kind == LOUO else "supertrial_id"
        try:
            values = [int(m[key]) for m in manifest]
        except KeyError as exc:
            raise KeyError(f"manifest entries lack {key!r} needed for {kind}") from exc
        index = {v: i for i, v in enumerate(sorted(set(values)))}
        return SplitScheme(kind, None, tuple(index[v] for v in values))
    if n < k:
        raise ValueError(f"{k}-fold split needs at least {k} episodes, got {n}")
    perm = np.random.default_rng(seed).permutation(n)
    folds = [0] * n
    for fold, block in enumerate(np.array_split(perm, k)):
        for i in block:
            folds[int(i)] = fold
    return SplitScheme(kind, k, tuple(folds))


def format_report(fold_metrics: Sequence[tuple[float, float]]) -> str:
    """``fold=<i> corr=<c> mae=<m>`` lines plus the aggregate line."""
    lines = [f"fold={i} corr={c:.6f} mae={m:.6f}" for i, (c, m) in enumerate(fold_metrics)]
    corr = fisher_z_average([c for c, _ in fold_metrics], strict=False)
    mean_mae = float(np.mean([m for _, m in fold_metrics]))
    lines.append(f"aggregate corr={corr:.6f} mae={mean_mae:.6f}")
    return "\n".join(lines) + "\n"


def parse_report(text: str) -> dict:
    folds, agg = [], None
    for line in text.splitlines():
        fields = dict(p.split("=", 1) for p in line.split() if "=" in p)
        if line.startswith("fold="):
            folds.append((int(fields["fold"]), float(fields["corr"]), float(fields["mae"])))
        elif line.startswith("aggregate"):
            agg = (float(fields["corr"]), float(fields["mae"]))
    return {"folds": folds, "aggregate": agg}
