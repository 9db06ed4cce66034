"""Finite-difference gradient suite over every differentiable op and the end-to-end model."""

from __future__ import annotations

from typing import Callable, Iterator

import numpy as np

from . import numerics as nx
from .adaptation import AdaptationConfig, Adapter, CrossFrameAttention, MultiscaleLayer, cross_frame_attention, multiscale_step
from .backbone import ViTConfig, attend
from .ctc import ctc_forward_loss
from .model import AdaptSignModel, ModelSpec
from .numerics import GradCheckReport, Tensor, grad_check
from .sequence_head import BiLSTM, TemporalConv, bilstm_forward, temporal_conv

Case = tuple[str, Callable[..., Tensor], list[np.ndarray]]


def _weighted(fn: Callable[..., Tensor], shape_rng: np.random.Generator) -> Callable[..., Tensor]:
    """Reduce an op's output to a scalar with fixed random weights, so no gradient cancels by symmetry."""
    cache: dict = {}

    def f(*xs):
        out = fn(*xs)
        if "w" not in cache:
            cache["w"] = Tensor(shape_rng.standard_normal(out.shape))
        return (out * cache["w"]).sum()

    return f


def op_cases(seed: int = 0) -> Iterator[Case]:
    rng = np.random.default_rng(seed)

    def r(*shape):
        return rng.standard_normal(shape)

    pos = lambda *s: rng.uniform(0.5, 2.0, size=s)  # noqa: E731
    away = lambda *s: np.sign(r(*s)) * rng.uniform(0.2, 1.5, size=s)  # noqa: E731

    yield "add", lambda a, b: a + b, [r(3, 4), r(4)]
    yield "sub", lambda a, b: a - b, [r(3, 1), r(3, 4)]
    yield "mul", lambda a, b: a * b, [r(2, 3, 4), r(3, 1)]
    yield "div", lambda a, b: a / b, [r(3, 4), pos(3, 4)]
    yield "neg", lambda a: -a, [r(5)]
    yield "power", lambda a: nx.power(a, 2.5), [pos(3, 4)]
    yield "matmul", lambda a, b: a @ b, [r(3, 4), r(4, 5)]
    yield "matmul_batched", lambda a, b: a @ b, [r(2, 3, 4), r(4, 2)]
    yield "sum", lambda a: nx.sum_(a, axis=1, keepdims=True), [r(3, 4)]
    yield "mean", lambda a: nx.mean(a, axis=(0, 2)), [r(2, 3, 4)]
    yield "max", lambda a: nx.max_(a, axis=1), [rng.permutation(12).reshape(3, 4) + 0.1 * r(3, 4)]
    yield "reshape", lambda a: nx.reshape(a, (4, 3)), [r(3, 4)]
    yield "transpose", lambda a: nx.transpose(a, (2, 0, 1)), [r(2, 3, 4)]
    yield "swapaxes", lambda a: nx.swapaxes(a, 0, 1), [r(2, 3)]
    yield "broadcast_to", lambda a: nx.broadcast_to(a, (2, 3, 4)), [r(3, 1)]
    yield "getitem", lambda a: a[np.array([0, 2, 0]), 1:], [r(3, 4)]
    yield "take", lambda a: nx.take(a, np.array([[0, 1], [1, 1], [2, 0]]), axis=0), [r(3, 4)]
    yield "concat", lambda a, b: nx.concat([a, b], axis=1), [r(2, 3), r(2, 2)]
    yield "stack", lambda a, b: nx.stack([a, b], axis=0), [r(2, 3), r(2, 3)]
    yield "exp", nx.exp, [r(3, 4)]
    yield "log", nx.log, [pos(3, 4)]
    yield "tanh", nx.tanh, [r(3, 4)]
    yield "sigmoid", nx.sigmoid, [3 * r(3, 4)]
    yield "relu", nx.relu, [away(3, 4)]
    yield "gelu", nx.gelu, [2 * r(3, 4)]
    yield "softmax", lambda a: nx.softmax(a, axis=-1), [r(3, 5)]
    yield "log_softmax", lambda a: nx.log_softmax(a, axis=-1), [r(3, 5)]
    yield "logsumexp", lambda a: nx.logsumexp(a, axis=0), [r(4, 3)]
    yield "layer_norm", lambda x, g, b: nx.layer_norm(x, g, b, 1e-5), [r(3, 6), 1 + 0.1 * r(6), r(6)]


def module_cases(seed: int = 0) -> Iterator[tuple[str, Callable[..., Tensor], list[Tensor]]]:
    """Composite layers, checked with respect to their inputs and all their parameters."""
    rng = np.random.default_rng(seed + 1)

    def r(*shape):
        return rng.standard_normal(shape)
    d, heads = 8, 2

    yield "attend+prefix", lambda q, k, v, p: attend(q, k, v, p), [Tensor(r(2, 3, 4)) for _ in range(3)] + [Tensor(r(2, 2, 4))]

    adapter = Adapter(d, 0.5, rng, np.float64)
    adapter.fc2_w.data = 0.1 * r(*adapter.fc2_w.shape)
    yield "adapter", lambda z, *_: adapter(z), [Tensor(r(3, d))] + adapter.parameters()

    layer = MultiscaleLayer(d, True, rng, np.float64)
    yield "multiscale_step", lambda x, z, *_: multiscale_step(x, z, layer, heads), [Tensor(r(3, d)), Tensor(r(3, 5, d))] + layer.parameters()

    cf = CrossFrameAttention(d, tau=1)
    cf = cf.astype(np.float64)
    for p in cf.parameters():
        p.data = p.data + 0.1 * r(*p.shape)
    yield "cross_frame", lambda x, pt, *_: cross_frame_attention(x, pt, cf), [Tensor(r(4, d)), Tensor(r(4, 3, d))] + cf.parameters()

    conv = TemporalConv(d, rng, np.float64)
    yield "temporal_conv", lambda x, *_: temporal_conv(x, conv), [Tensor(r(9, d))] + conv.parameters()

    lstm = BiLSTM(d, 2, rng, np.float64)
    yield "bilstm", lambda x, *_: bilstm_forward(x, lstm), [Tensor(r(4, d))] + lstm.parameters()

    yield "ctc_loss", lambda lat: ctc_forward_loss(nx.log_softmax(lat, axis=-1), [1, 2, 1]), [Tensor(r(6, 4))]


def _named(params: list[Tensor], prefix: str) -> list[str]:
    return [f"{prefix}[{i}]" for i in range(len(params))]


def end_to_end_model(seed: int = 0) -> tuple[AdaptSignModel, np.ndarray, list[int]]:
    """The desk model in f64 with every zero-initialised tensor perturbed, so each branch carries gradient."""
    model = AdaptSignModel(ModelSpec(ViTConfig.preset("desk"), 6, AdaptationConfig()), dtype=np.float64)
    rng = np.random.default_rng(seed + 2)
    for _, p in model.named_parameters():
        if not np.any(p.data):
            p.data = 0.05 * rng.standard_normal(p.shape)
    frames = rng.random((12, 3, 32, 32))
    return model, frames, [1, 2]


def gradient_suite(tol: float = 1e-4, include_model: bool = True, model_coords: int = 3, seed: int = 0) -> list[tuple[str, GradCheckReport]]:
    """Run every check in float64; returns (name, report) pairs."""
    results = []
    for name, fn, arrays in op_cases(seed):
        inputs = [Tensor(np.asarray(a, dtype=np.float64)) for a in arrays]
        f = _weighted(fn, np.random.default_rng(seed + 99))
        results.append((name, grad_check(f, inputs, tol=tol, names=_named(inputs, name))))
    for name, fn, inputs in module_cases(seed):
        f = _weighted(fn, np.random.default_rng(seed + 99))
        results.append((name, grad_check(f, inputs, tol=tol, names=_named(inputs, name), max_coords=12)))
    if include_model:
        model, frames, target = end_to_end_model(seed)
        named = list(model.named_parameters())
        params = [p for _, p in named]

        def loss(*_):
            return ctc_forward_loss(model(frames), target)

        results.append(("end_to_end", grad_check(loss, params, tol=tol, names=[n for n, _ in named], max_coords=model_coords, seed=seed)))
    return results
