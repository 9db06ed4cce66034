"""Adam with coupled (L2-style) weight decay and the step learning-rate schedule."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from ..errors import ConfigError
from .tensor import Tensor


@dataclass
class AdamState:
    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step_count: int = 0

    @classmethod
    def for_params(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(
    params: Sequence[np.ndarray],
    grads: Sequence[np.ndarray | None],
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
    weight_decay: float = 0.0,
) -> tuple[Sequence[np.ndarray], AdamState]:
    """Update ``params`` in place and return them with the advanced state.

    Weight decay is added to the gradient before the moment updates (classic
    Adam, not AdamW). A ``None`` gradient is treated as zero.
    """
    if lr <= 0:
        raise ConfigError(f"learning rate must be positive, got {lr}")
    beta1, beta2 = betas
    state.step_count += 1
    t = state.step_count
    bias1 = 1.0 - beta1**t
    bias2 = 1.0 - beta2**t
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if g is None:
            g = np.zeros_like(p)
        if weight_decay:
            g = g + weight_decay * p
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * (g * g)
        denom = np.sqrt(v) / np.sqrt(bias2) + eps
        p -= ((lr / bias1) * m / denom).astype(p.dtype, copy=False)
    return params, state


@dataclass
class Adam:
    """Optimizer over a fixed list of tensors; only tensors passed in are touched."""

    params: list[Tensor]
    lr: float = 1e-4
    betas: tuple[float, float] = (0.9, 0.999)
    eps: float = 1e-8
    weight_decay: float = 0.0
    state: AdamState = field(init=False)

    def __post_init__(self) -> None:
        if self.lr <= 0:
            raise ConfigError(f"learning rate must be positive, got {self.lr}")
        self.state = AdamState.for_params([p.data for p in self.params])

    def step(self) -> None:
        adam_step(
            [p.data for p in self.params],
            [p.grad for p in self.params],
            self.state,
            self.lr,
            self.betas,
            self.eps,
            self.weight_decay,
        )

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None


def step_lr(epoch: int, base_lr: float, milestones: Sequence[int] = (20, 30), factor: float = 5.0) -> float:
    """Learning rate for a 1-based ``epoch``: divided by ``factor`` after each milestone epoch."""
    passed = sum(1 for m in milestones if epoch > m)
    return base_lr / factor**passed
