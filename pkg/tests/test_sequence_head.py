import numpy as np
import pytest

from adaptsign.errors import ConfigError, SequenceTooShortError
from adaptsign.numerics import Tensor
from adaptsign.sequence_head import (
    BiLSTM,
    Classifier,
    LSTMDirection,
    SeqConfig,
    SequenceHead,
    TemporalConv,
    bilstm_forward,
    classify,
    conv1d_same,
    lstm_cell,
    output_length,
    temporal_conv,
)


@pytest.mark.parametrize("t, expected", [(4, 1), (7, 1), (8, 2), (16, 4), (19, 4), (23, 5)])
def test_output_length(t, expected, rng):
    assert output_length(t) == expected
    conv = TemporalConv(6, rng, np.float64)
    assert temporal_conv(Tensor(rng.standard_normal((t, 6))), conv).shape == (expected, 6)


def test_too_short_names_minimum(rng):
    with pytest.raises(SequenceTooShortError, match="4"):
        temporal_conv(Tensor(np.zeros((3, 6))), TemporalConv(6, rng))


def test_conv_matches_direct_sum(rng):
    x, w = rng.standard_normal((7, 3)), rng.standard_normal((15, 4))
    got = conv1d_same(Tensor(x), Tensor(w)).data
    padded = np.concatenate([x[:1], x[:1], x, x[-1:], x[-1:]])
    kernel = w.reshape(5, 3, 4)
    want = np.array([sum(padded[i + k] @ kernel[k] for k in range(5)) for i in range(7)])
    np.testing.assert_allclose(got, want, rtol=1e-12)


def test_constant_input_gives_constant_rows(rng):
    x = Tensor(np.tile(rng.standard_normal(6), (12, 1)))
    conv = TemporalConv(6, rng, np.float64)
    conv.norm1_b.data = rng.standard_normal(6)
    conv.norm2_b.data = rng.standard_normal(6)
    out = temporal_conv(x, conv).data
    np.testing.assert_allclose(out, np.broadcast_to(out[0], out.shape), rtol=0, atol=1e-12)


def test_lstm_cell_matches_gate_equations(rng):
    h_dim, inp = 3, 5
    cell = LSTMDirection(inp, h_dim, rng, np.float64)
    x, h, c = rng.standard_normal((1, inp)), rng.standard_normal((1, h_dim)), rng.standard_normal((1, h_dim))
    h1, c1 = lstm_cell(Tensor(x @ cell.w_ih.data), Tensor(h), Tensor(c), cell.w_hh, cell.b)

    sig = lambda v: 1 / (1 + np.exp(-v))  # noqa: E731
    W, U, b = cell.w_ih.data, cell.w_hh.data, cell.b.data
    blocks = [slice(k * h_dim, (k + 1) * h_dim) for k in range(4)]
    i, f, g, o = (x @ W[:, s] + h @ U[:, s] + b[s] for s in blocks)
    c_ref = sig(f) * c + sig(i) * np.tanh(g)
    h_ref = sig(o) * np.tanh(c_ref)
    np.testing.assert_allclose(c1.data, c_ref, rtol=0, atol=1e-10)
    np.testing.assert_allclose(h1.data, h_ref, rtol=0, atol=1e-10)


def _mirrored(lstm: BiLSTM, rng) -> BiLSTM:
    """Swap the directions; deeper layers also swap which input half their weights read."""
    out = BiLSTM(6, len(lstm.forward_cells), rng, np.float64)
    out.forward_cells, out.backward_cells = [], []
    for k, (fwd, bwd) in enumerate(zip(lstm.forward_cells, lstm.backward_cells)):
        for src, dst in ((bwd, out.forward_cells), (fwd, out.backward_cells)):
            cell = LSTMDirection(6, 3, rng, np.float64)
            cell.w_hh.data, cell.b.data = src.w_hh.data.copy(), src.b.data.copy()
            w = src.w_ih.data
            cell.w_ih.data = np.concatenate([w[3:], w[:3]]) if k else w.copy()
            dst.append(cell)
    return out


def test_bilstm_shape_and_time_reversal(rng):
    lstm = BiLSTM(6, 2, rng, np.float64)
    x = rng.standard_normal((5, 6))
    out = bilstm_forward(Tensor(x), lstm).data
    assert out.shape == (5, 6)
    mirrored = bilstm_forward(Tensor(x[::-1].copy()), _mirrored(lstm, rng)).data[::-1]
    np.testing.assert_allclose(np.concatenate([mirrored[:, 3:], mirrored[:, :3]], axis=1), out, rtol=1e-12, atol=1e-14)


def test_classifier_rows_are_log_distributions(rng):
    head = Classifier(6, 4, rng, np.float64)
    x = Tensor(rng.standard_normal((5, 6)))
    lp = classify(x, head).data
    assert lp.shape == (5, 4)
    np.testing.assert_allclose(np.exp(lp).sum(axis=1), 1.0, atol=1e-6)
    head.b.data = head.b.data + 3.0
    np.testing.assert_array_equal(np.argmax(classify(x, head).data, axis=1), np.argmax(lp, axis=1))


def test_head_end_to_end_shape(rng):
    head = SequenceHead(SeqConfig(8, 5))
    out = head(Tensor(rng.standard_normal((17, 8)).astype(np.float32)))
    assert out.shape == (4, 6)


def test_head_config_validation():
    with pytest.raises(ConfigError):
        SeqConfig(7, 5)
    with pytest.raises(ConfigError):
        SeqConfig(8, 0)
