from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .autograd import NonFiniteError, Parameter


@dataclass(frozen=True)
class SgdConfig:
    """Minibatch SGD with a step learning-rate schedule.

    Defaults are the published operating point (3e-5, x0.1 every 20 epochs,
    batch 4, 40 epochs).  ``momentum`` 0 and ``clip_norm`` 0 give plain SGD;
    a positive ``clip_norm`` rescales any single parameter gradient whose L2
    norm exceeds it.  ``method="adam"`` swaps the update for bias-corrected
    Adam moments (``momentum`` is then ignored) under the same schedule.
    """

    initial_lr: float = 3e-5
    decay_factor: float = 0.1
    decay_every_epochs: int = 20
    batch_size: int = 4
    epochs: int = 40
    momentum: float = 0.0
    clip_norm: float = 0.0
    method: str = "sgd"

    def __post_init__(self):
        if not self.initial_lr > 0:
            raise ValueError("initial_lr must be > 0")
        if not 0 < self.decay_factor <= 1:
            raise ValueError("decay_factor must be in (0, 1]")
        if self.decay_every_epochs < 1:
            raise ValueError("decay_every_epochs must be >= 1")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")
        if self.method not in ("sgd", "adam"):
            raise ValueError(f"unknown method {self.method!r} (expected sgd or adam)")
        if not self.clip_norm >= 0:
            raise ValueError("clip_norm must be >= 0")


def learning_rate(epoch: int, config: SgdConfig) -> float:
    return config.initial_lr * config.decay_factor ** (epoch // config.decay_every_epochs)


ADAM_BETAS = (0.9, 0.999)
ADAM_EPS = 1e-8


def sgd_step(params: Iterable[Parameter], epoch: int, config: SgdConfig,
             velocity: dict | None = None) -> None:
    """value <- value - lr(epoch) * step, in place.

    ``step`` is the (clipped) gradient for plain SGD.  Momentum and Adam keep
    their buffers in ``velocity``, keyed by parameter name.
    """
    lr = learning_rate(epoch, config)
    stateful = config.momentum or config.method == "adam"
    if stateful and velocity is None:
        raise ValueError(f"{config.method} with momentum needs a state buffer")
    if config.method == "adam":
        velocity["#steps"] = velocity.get("#steps", 0) + 1
    for p in params:
        if not np.isfinite(p.grad).all():
            raise NonFiniteError("sgd_step", f"gradient of {p.name}")
        step = p.grad
        if config.clip_norm:
            norm = float(np.linalg.norm(step))
            if norm > config.clip_norm:
                step = step * (config.clip_norm / norm)
        if config.method == "adam":
            step = _adam_direction(p.name, step, velocity)
        elif config.momentum:
            v = velocity.get(p.name)
            v = step.copy() if v is None else config.momentum * v + step
            velocity[p.name] = v
            step = v
        p.data = p.data - lr * step


def _adam_direction(name: str, g: np.ndarray, state: dict) -> np.ndarray:
    b1, b2 = ADAM_BETAS
    t = state["#steps"]
    m, v = state.get(name, (np.zeros_like(g), np.zeros_like(g)))
    m = b1 * m + (1 - b1) * g
    v = b2 * v + (1 - b2) * g * g
    state[name] = (m, v)
    return (m / (1 - b1**t)) / (np.sqrt(v / (1 - b2**t)) + ADAM_EPS)
