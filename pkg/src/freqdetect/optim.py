"""Adam optimizer with bias correction and a cosine learning-rate schedule."""

from __future__ import annotations

import math

import numpy as np

from .autodiff import Tensor

__all__ = ["NonFiniteGradientError", "AdamMoments", "adam_step", "cosine_lr"]


class NonFiniteGradientError(FloatingPointError):
    """A gradient contained NaN or infinity; carries the parameter name."""

    def __init__(self, param_name: str, step: int):
        super().__init__(f"non-finite gradient for parameter {param_name!r} at step {step}")
        self.param_name = param_name
        self.step = step


class AdamMoments:
    """First and second moment accumulators keyed by parameter name."""

    def __init__(self, params: list[tuple[str, Tensor]]):
        self.m = {name: np.zeros(p.shape) for name, p in params}
        self.v = {name: np.zeros(p.shape) for name, p in params}

    def state(self) -> dict[str, np.ndarray]:
        """Flat named view of both accumulators, for checkpointing."""
        out: dict[str, np.ndarray] = {}
        for name, arr in self.m.items():
            out[f"adam.m.{name}"] = arr
        for name, arr in self.v.items():
            out[f"adam.v.{name}"] = arr
        return out


def adam_step(
    params: list[tuple[str, Tensor]],
    grads: dict[Tensor, Tensor],
    moments: AdamMoments,
    lr: float,
    step: int,
    beta1: float = 0.9,
    beta2: float = 0.999,
    eps: float = 1e-8,
) -> None:
    """One in-place Adam update over named parameters.

    ``grads`` is the tape's output mapping; parameters without an entry are
    treated as having zero gradient. ``step`` is 1-based and drives bias
    correction.
    """
    if step < 1:
        raise ValueError(f"adam_step: step must be >= 1, got {step}")
    bc1 = 1.0 - beta1**step
    bc2 = 1.0 - beta2**step
    for name, p in params:
        g = grads[p].data if p in grads else np.zeros(p.shape)
        if not np.all(np.isfinite(g)):
            raise NonFiniteGradientError(name, step)
        m = moments.m[name]
        v = moments.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * np.square(g)
        p.data = p.data - lr * (m / bc1) / (np.sqrt(v / bc2) + eps)


def cosine_lr(step: int, total_steps: int, lr0: float) -> float:
    """Half-cosine decay from lr0 at step 0 to 0 at total_steps.

    Steps beyond the horizon clamp to the final (zero) value.
    """
    if total_steps < 1:
        raise ValueError(f"cosine_lr: total_steps must be >= 1, got {total_steps}")
    if step < 0:
        raise ValueError(f"cosine_lr: step must be >= 0, got {step}")
    if lr0 < 0:
        raise ValueError(f"cosine_lr: lr0 must be non-negative, got {lr0}")
    step = min(step, total_steps)
    return 0.5 * lr0 * (1.0 + math.cos(math.pi * step / total_steps))
