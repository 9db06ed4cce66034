#!/usr/bin/env python3
# Tape autodiff on numpy, the FLOP counter, and finite-difference checking.

# %%
import numpy as np

from adaptsign import numerics as nx
from adaptsign.checks import gradient_suite
from adaptsign.numerics.gradcheck import grad_check

rng = np.random.default_rng(0)

# %% a tensor records the ops applied to it; backward() walks the tape in reverse
a = nx.Tensor(rng.standard_normal((3, 4)), requires_grad=True)
b = nx.Tensor(rng.standard_normal((4, 2)), requires_grad=True)
loss = (a @ b).sum()
loss.backward()
a.grad  # every row equals b summed over its columns
np.allclose(a.grad, np.tile(b.data.sum(axis=1), (3, 1)))

# %% inside no_grad nothing is recorded
with nx.no_grad():
    y = a @ b
y.requires_grad

# %% matmuls are counted as multiply-accumulates; 1 MAC = 2 FLOPs
with nx.count_flops() as fc:
    _ = a @ b
fc.macs, fc.flops  # 3*4*2 = 24 MACs

# %% central differences against the tape, with a noise-aware floor
x = nx.Tensor(rng.standard_normal(5), requires_grad=True)
report = grad_check(lambda t: (nx.gelu(t) * t).sum(), [x])
report.passed, report.worst

# %% the whole suite: every op, every module, then the desk model end to end
results = gradient_suite(tol=1e-4)
for name, r in results:
    print(f"{name:24s} {'ok' if r.passed else 'FAIL'}  worst {r.worst:.1e}")
