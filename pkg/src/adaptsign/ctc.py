"""CTC loss (log-space forward recurrence), a path-enumeration oracle, and best-path decoding.

Lattices are ``[T, V + 1]`` arrays of per-step log-probabilities with the blank at
column 0. Targets are sequences of gloss ids in ``1..V``.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from . import numerics as nx
from .errors import LabelError, OracleSizeError
from .numerics import Tensor

BLANK = 0
LOG_ZERO = -1e30
BRUTE_FORCE_LIMIT = 10**6


def _check_target(target: Sequence[int], classes: int) -> list[int]:
    target = [int(y) for y in target]
    for y in target:
        if not 1 <= y < classes:
            raise LabelError(f"gloss id {y} outside 1..{classes - 1} (0 is the blank)")
    return target


def min_steps(target: Sequence[int]) -> int:
    """Fewest lattice steps that can emit ``target``: one per label plus a blank between repeats."""
    repeats = sum(1 for a, b in zip(target, target[1:]) if a == b)
    return len(target) + repeats


def is_feasible(steps: int, target: Sequence[int]) -> bool:
    return steps >= min_steps(target)


def ctc_forward_loss(lattice, target: Sequence[int]) -> Tensor:
    """-log of the total probability of all alignments of ``target``.

    Returns a scalar tensor; when the lattice is too short for any alignment the
    result is ``+inf`` and carries no gradient.
    """
    lattice = nx.as_tensor(lattice)
    steps, classes = lattice.shape
    target = _check_target(target, classes)
    if not is_feasible(steps, target):
        return Tensor(np.array(np.inf, dtype=lattice.dtype))

    ext = [BLANK]
    for y in target:
        ext += [y, BLANK]
    s = len(ext)
    dtype = lattice.dtype
    emit = nx.take(lattice, ext, axis=1)  # [T, S]

    skip = np.full(s, LOG_ZERO, dtype=dtype)
    for i in range(3, s, 2):
        if ext[i] != ext[i - 2]:
            skip[i] = 0.0
    start = np.full(s, LOG_ZERO, dtype=dtype)
    start[: min(2, s)] = 0.0
    pad1 = Tensor(np.full(1, LOG_ZERO, dtype=dtype))
    pad2 = Tensor(np.full(min(2, s), LOG_ZERO, dtype=dtype))

    alpha = emit[0] + start
    for t in range(1, steps):
        stay = alpha
        step = nx.concat([pad1, alpha[:-1]], axis=0)
        if s > 2:
            jump = nx.concat([pad2, alpha[:-2]], axis=0) + skip
            options = nx.stack([stay, step, jump], axis=0)
        else:
            options = nx.stack([stay, step], axis=0)
        alpha = nx.logsumexp(options, axis=0) + emit[t]
    if s == 1:
        return -alpha[0]
    return -nx.logsumexp(alpha[s - 2 :], axis=0)


def ctc_brute_force(lattice, target: Sequence[int]) -> float:
    """Enumerate every path, collapse repeats, drop blanks, and sum the matching ones."""
    lp = np.asarray(lattice.data if isinstance(lattice, Tensor) else lattice, dtype=np.float64)
    steps, classes = lp.shape
    target = _check_target(target, classes)
    total = classes**steps
    if total > BRUTE_FORCE_LIMIT:
        raise OracleSizeError(f"{classes}^{steps} = {total} paths exceeds the oracle limit {BRUTE_FORCE_LIMIT}")

    paths = np.stack(np.unravel_index(np.arange(total), (classes,) * steps), axis=1)
    logp = lp[np.arange(steps)[None, :], paths].sum(axis=1)
    prev = np.concatenate([np.full((total, 1), -1), paths[:, :-1]], axis=1)
    emitted = (paths != prev) & (paths != BLANK)
    n = len(target)
    match = emitted.sum(axis=1) == n
    if n:
        pos = np.clip(np.cumsum(emitted, axis=1) - 1, 0, n - 1)
        expected = np.asarray(target)[pos]
        match &= np.all(~emitted | (paths == expected), axis=1)
    if not match.any():
        return float("inf")
    chosen = logp[match]
    m = chosen.max()
    return float(-(m + np.log(np.exp(chosen - m).sum())))


def greedy_decode(lattice) -> list[int]:
    """Best path: per-step argmax (ties to the lower id), merge repeats, drop blanks."""
    lp = np.asarray(lattice.data if isinstance(lattice, Tensor) else lattice)
    best = np.argmax(lp, axis=1)
    out, prev = [], None
    for k in best.tolist():
        if k != prev and k != BLANK:
            out.append(k)
        prev = k
    return out


def save_lattice_csv(path: str | Path, lattice) -> None:
    lp = np.asarray(lattice.data if isinstance(lattice, Tensor) else lattice, dtype=np.float64)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in lp:
            writer.writerow([repr(float(v)) for v in row])


def load_lattice_csv(path: str | Path) -> np.ndarray:
    """One row per step, one column per class (blank first); a non-numeric header row is skipped."""
    rows = []
    with open(path, newline="") as fh:
        for i, row in enumerate(csv.reader(fh)):
            if not row:
                continue
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                if i == 0:
                    continue
                raise
    return np.asarray(rows, dtype=np.float64)
