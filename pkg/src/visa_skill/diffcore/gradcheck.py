from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .autograd import NonFiniteError, Tensor, backward, no_grad


@dataclass
class GradCheckReport:
    tolerance: float
    errors: dict[str, float] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(e <= self.tolerance for e in self.errors.values())

    @property
    def worst(self) -> tuple[str, float]:
        name = max(self.errors, key=self.errors.get)
        return name, self.errors[name]

    def failures(self) -> list[str]:
        return [n for n, e in self.errors.items() if e > self.tolerance]

    def lines(self) -> list[str]:
        out = []
        for name, err in self.errors.items():
            flag = "ok" if err <= self.tolerance else "FAIL"
            out.append(f"{name} max_rel_err={err:.3e} {flag}")
        return out


def _scalar(fn: Callable[[], Tensor]) -> float:
    with no_grad():
        val = float(np.asarray(fn().data).reshape(()))
    if not math.isfinite(val):
        raise NonFiniteError("grad_check", "function value at a perturbed point")
    return val


def grad_check(fn: Callable[[], Tensor], params: Sequence[Tensor], step: float = 1e-5,
               tolerance: float = 1e-4, max_entries: int | None = None,
               seed: int = 0, names: Sequence[str] | None = None) -> GradCheckReport:
    """Compare reverse-mode gradients with central finite differences.

    The error for an entry is |analytic - numeric| / max(1, |numeric|); the report
    keeps the maximum per parameter.  ``max_entries`` caps how many entries per
    parameter are probed (chosen with a seeded RNG); None probes all of them.
    """
    if not 1e-7 <= step <= 1e-3:
        raise ValueError("step must lie in [1e-7, 1e-3]")
    loss = fn()
    backward(loss)
    analytic = [np.array(p.grad, copy=True) for p in params]
    rng = np.random.default_rng(seed)
    report = GradCheckReport(tolerance)
    for i, p in enumerate(params):
        name = names[i] if names else getattr(p, "name", f"param{i}")
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_entries is not None and flat.size > max_entries:
            idx = np.sort(rng.choice(flat.size, size=max_entries, replace=False))
        worst = 0.0
        for j in idx:
            orig = flat[j]
            flat[j] = orig + step
            f_plus = _scalar(fn)
            flat[j] = orig - step
            f_minus = _scalar(fn)
            flat[j] = orig
            numeric = (f_plus - f_minus) / (2 * step)
            err = abs(analytic[i].reshape(-1)[j] - numeric) / max(1.0, abs(numeric))
            worst = max(worst, err)
        report.errors[name] = worst
    return report
