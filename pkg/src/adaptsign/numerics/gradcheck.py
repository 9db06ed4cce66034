"""Central finite-difference check of reverse-mode gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb
from typing import Callable, Sequence

import numpy as np

from ..errors import UsageError
from .tensor import Tensor, no_grad

FD_STEP = 1e-5
NOISE_SIGMAS = 4.0


@dataclass
class GradCheckReport:
    tol: float
    max_rel_error: list[float] = field(default_factory=list)
    names: list[str] = field(default_factory=list)
    checked: list[int] = field(default_factory=list)

    @property
    def worst(self) -> float:
        return max(self.max_rel_error, default=0.0)

    @property
    def passed(self) -> bool:
        return self.worst <= self.tol

    def __str__(self) -> str:
        lines = [f"grad_check tol={self.tol:g} -> {'PASS' if self.passed else 'FAIL'}"]
        for name, err, n in zip(self.names, self.max_rel_error, self.checked):
            lines.append(f"  {name:<40s} coords={n:<6d} max_rel_err={err:.3e}")
        return "\n".join(lines)


def _relative_errors(analytic: np.ndarray, numeric: np.ndarray, resolution: float) -> np.ndarray:
    # Components far below the input's gradient scale are judged against that scale, and
    # nothing is judged below the difference quotient's rounding resolution.
    scale = max(float(np.abs(numeric).max(initial=0.0)), float(np.abs(analytic).max(initial=0.0)))
    floor = max(1e-3 * scale, resolution, 1e-300)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def function_noise(f: Callable[..., Tensor], inputs: Sequence[Tensor], rng: np.random.Generator, probes: int = 3, order: int = 6) -> float:
    """Standard deviation of the rounding noise in ``f``, from high-order differences.

    Along a coordinate, ``order``-th differences at a spacing of a few hundred ulps
    cancel the smooth part of ``f`` and leave only rounding noise, whose variance they
    scale by C(2 order, order) (the More-Wild estimate).
    """
    sizes = np.array([x.data.size for x in inputs], dtype=float)
    scale = float(comb(2 * order, order))
    sigmas = []
    with no_grad():
        for _ in range(probes):
            x = inputs[int(rng.choice(len(inputs), p=sizes / sizes.sum()))]
            flat = x.data.reshape(-1)
            c = int(rng.integers(flat.size))
            orig = flat[c]
            delta = 256 * np.finfo(flat.dtype).eps * max(abs(float(orig)), 1.0)
            values = []
            for k in range(order + 5):
                flat[c] = orig + k * delta
                values.append(float(f(*inputs).data))
            flat[c] = orig
            diffs = np.diff(np.asarray(values), n=order)
            sigmas.append(float(np.sqrt(np.mean(diffs**2) / scale)))
    return max(sigmas, default=0.0)


def grad_check(
    f: Callable[..., Tensor],
    inputs: Sequence[Tensor],
    tol: float = 1e-6,
    h: float = FD_STEP,
    max_coords: int | None = None,
    seed: int = 0,
    names: Sequence[str] | None = None,
) -> GradCheckReport:
    """Compare ``f``'s reverse-mode gradients with central differences.

    ``f(*inputs)`` must return a scalar tensor. When ``max_coords`` is given,
    larger inputs are checked on a seeded random subset of coordinates.
    """
    for x in inputs:
        x.data = np.ascontiguousarray(x.data)
        x.grad = None
        x.requires_grad = True
    out = f(*inputs)
    if not isinstance(out, Tensor) or out.size != 1:
        shape = getattr(out, "shape", type(out).__name__)
        raise UsageError(f"grad_check needs a scalar-valued function, got output {shape}")
    out.backward()
    f0 = abs(float(out.data))
    eps = float(np.finfo(out.data.dtype).eps) if np.issubdtype(out.data.dtype, np.floating) else 2.0**-52
    analytic = [np.zeros_like(x.data) if x.grad is None else x.grad.copy() for x in inputs]

    rng = np.random.default_rng(seed)
    # A central difference carries about sigma_f / h of rounding noise; gaps inside a
    # NOISE_SIGMAS band of that are not evidence against the analytic gradient.
    sigma_f = max(eps * max(f0, 1.0), function_noise(f, inputs, rng))
    resolution = NOISE_SIGMAS * sigma_f / (h * tol)
    report = GradCheckReport(tol=tol)
    for i, x in enumerate(inputs):
        flat = x.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.choice(flat.size, size=max_coords, replace=False))
        numeric = np.empty(len(coords))
        with no_grad():
            for k, c in enumerate(coords):
                orig = flat[c]
                flat[c] = orig + h
                f_plus = float(f(*inputs).data)
                flat[c] = orig - h
                f_minus = float(f(*inputs).data)
                flat[c] = orig
                numeric[k] = (f_plus - f_minus) / (2 * h)
        errs = _relative_errors(analytic[i].reshape(-1)[coords], numeric, resolution)
        report.max_rel_error.append(float(errs.max(initial=0.0)))
        report.names.append(names[i] if names else x.name or f"input[{i}]")
        report.checked.append(len(coords))
    return report
