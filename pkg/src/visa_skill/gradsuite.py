"""Finite-difference audit of the whole model and of every differentiable op.

The model audit builds a tiny instance (T=3, 4x4 feature maps, K=2, D_h=3)
and checks each parameter group under both the plain loss and the
position-supervised loss.  The op audit exercises each registered derivative
on its own so that a wrong derivative is reported by op name.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .diffcore import DERIVATIVES, Tensor, conv3d, grad_check, ops
from .heads import render_target_heatmaps
from .model import LossWeights, ModelConfig, SkillModel

TOLERANCE = 1e-4
STEP = 1e-5

TINY = dict(K=2, C=3, c_hidden=2, c_out=3, d_h=3, T=3, snippet_len=2, target_radius=1.0)
TINY_FRAME = 16  # two 2x2 downsamples -> 4x4 feature maps
TINY_BATCH = 2


@dataclass
class AuditResult:
    group_errors: dict[str, float] = field(default_factory=dict)  # "L/extractor" -> worst error
    op_errors: dict[str, float] = field(default_factory=dict)
    tolerance: float = TOLERANCE

    @property
    def failed_groups(self) -> list[str]:
        return [k for k, v in self.group_errors.items() if not v <= self.tolerance]

    @property
    def failed_ops(self) -> list[str]:
        return [k for k, v in self.op_errors.items() if not v <= self.tolerance]

    @property
    def passed(self) -> bool:
        return not self.failed_groups and not self.failed_ops

    def report(self) -> str:
        lines = []
        for name, err in self.group_errors.items():
            lines.append(f"group {name} max_rel_err={err:.3e} {'ok' if err <= self.tolerance else 'FAIL'}")
        for name, err in self.op_errors.items():
            lines.append(f"op {name} max_rel_err={err:.3e} {'ok' if err <= self.tolerance else 'FAIL'}")
        verdict = "PASS" if self.passed else "FAIL"
        extra = ""
        if not self.passed:
            extra = " failing=" + ",".join(self.failed_groups + [f"op:{o}" for o in self.failed_ops])
        lines.append(f"gradcheck {verdict}{extra}")
        return "\n".join(lines) + "\n"


def tiny_problem(seed: int = 0, supervised: bool = False):
    """Model, inputs, normalized targets and heatmaps for the tiny instance."""
    rng = np.random.default_rng(seed)
    config = ModelConfig(**TINY, supervise_positions=supervised, m=1)
    model = SkillModel(config, seed=seed)
    # spread the centroids so assignments are soft but not uniform
    model.codebook.centroids.data = rng.normal(0.0, 0.3, size=model.codebook.centroids.shape)
    x = rng.normal(0.0, 1.0, size=(TINY_BATCH, config.T, config.snippet_len, TINY_FRAME, TINY_FRAME, 1))
    scores = rng.uniform(0.0, 1.0, size=TINY_BATCH)
    hw = config.extractor_config().output_hw(TINY_FRAME, TINY_FRAME)
    heatmaps = None
    if supervised:
        heatmaps = np.stack([
            render_target_heatmaps([[tuple(rng.uniform(0, hw[1] - 1, size=2))] for _ in range(config.T)],
                                   hw[0], hw[1], config.target_radius)
            for _ in range(TINY_BATCH)])
    return model, x, scores, heatmaps


def audit_model(seed: int = 0, tolerance: float = TOLERANCE) -> dict[str, float]:
    """Worst relative error per parameter group under L and L'."""
    errors = {}
    for label, supervised in (("L", False), ("L'", True)):
        model, x, s, hm = tiny_problem(seed, supervised)
        weights = LossWeights()

        def fn():
            return model.loss(model(x), s, weights, hm)[0]

        for group, params in model.parameter_groups().items():
            rep = grad_check(fn, params, step=STEP, tolerance=tolerance)
            errors[f"{label}/{group}"] = max(rep.errors.values())
    return errors


def _op_cases(rng: np.random.Generator) -> dict[str, tuple[Callable, list[np.ndarray]]]:
    """op name -> (function of Tensors returning a scalar, input arrays)."""
    def r(*shape):
        return rng.normal(size=shape)

    pos = rng.uniform(0.5, 2.0, size=(3, 4))

    def scal(t):
        return ops.sum(t * Tensor(rng_fixed(t.shape)))

    fixed: dict[tuple, np.ndarray] = {}

    def rng_fixed(shape):
        if shape not in fixed:
            fixed[shape] = np.random.default_rng(len(shape) * 7 + sum(shape)).normal(size=shape)
        return fixed[shape]

    distinct = np.arange(12, dtype=float).reshape(3, 4) + 0.1 * r(3, 4)  # no ties
    return {
        "add": (lambda a, b: scal(a + b), [r(3, 4), r(4)]),
        "sub": (lambda a, b: scal(a - b), [r(3, 4), r(3, 1)]),
        "mul": (lambda a, b: scal(a * b), [r(3, 4), r(3, 4)]),
        "div": (lambda a, b: scal(a / b), [r(3, 4), pos]),
        "neg": (lambda a: scal(-a), [r(3, 4)]),
        "matmul": (lambda a, b: scal(ops.matmul(a, b)), [r(2, 3, 4), r(4, 5)]),
        "exp": (lambda a: scal(ops.exp(a)), [r(3, 4)]),
        "log": (lambda a: scal(ops.log(a)), [pos]),
        "tanh": (lambda a: scal(ops.tanh(a)), [r(3, 4)]),
        "sigmoid": (lambda a: scal(ops.sigmoid(a)), [r(3, 4)]),
        "relu": (lambda a: scal(ops.relu(a)), [distinct - 5.05]),
        "abs": (lambda a: scal(ops.absolute(a)), [distinct - 5.05]),
        "square": (lambda a: scal(ops.square(a)), [r(3, 4)]),
        "clip": (lambda a: scal(ops.clip(a, -0.5, 0.5)), [0.37 * (distinct - 5.05)]),
        "sum": (lambda a: scal(ops.sum(a, axis=1)), [r(3, 4)]),
        "mean": (lambda a: scal(ops.mean(a, axis=0, keepdims=True)), [r(3, 4)]),
        "max": (lambda a: scal(ops.max_argmax(a, axis=1)[0]), [distinct]),
        "sort": (lambda a: scal(ops.sort(a, axis=0)[0]), [distinct]),
        "l2_normalize": (lambda a: scal(ops.l2_normalize(a, axis=-1)), [r(3, 4)]),
        "reshape": (lambda a: scal(a.reshape(4, 3)), [r(3, 4)]),
        "transpose": (lambda a: scal(ops.transpose(a, (1, 0))), [r(3, 4)]),
        "getitem": (lambda a: scal(ops.getitem(a, (slice(None), [0, 2, 2]))), [r(3, 4)]),
        "concat": (lambda a, b: scal(ops.concat([a, b], axis=1)), [r(3, 4), r(3, 2)]),
        "stack": (lambda a, b: scal(ops.stack([a, b], axis=0)), [r(3, 4), r(3, 4)]),
        "conv3d": (lambda x, k, b: scal(conv3d(x, k, b)), [r(1, 3, 4, 4, 2), r(2, 3, 3, 2, 2), r(2)]),
    }


def audit_ops(seed: int = 0, tolerance: float = TOLERANCE) -> dict[str, float]:
    """Worst relative error per registered op; ops without a case report NaN."""
    cases = _op_cases(np.random.default_rng(seed))
    errors = {}
    for name in sorted(DERIVATIVES):
        if name not in cases:
            errors[name] = float("nan")
            continue
        fn, arrays = cases[name]
        inputs = [Tensor(a.copy(), requires_grad=True) for a in arrays]
        rep = grad_check(lambda: fn(*inputs), inputs, step=STEP, tolerance=tolerance)
        errors[name] = max(rep.errors.values())
    return errors


def run_audit(seed: int = 0, tolerance: float = TOLERANCE) -> AuditResult:
    return AuditResult(audit_model(seed, tolerance), audit_ops(seed, tolerance), tolerance)
