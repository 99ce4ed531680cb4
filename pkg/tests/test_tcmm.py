import math

import numpy as np
import pytest

from visa_skill.diffcore import Parameter, Tensor, grad_check, ops
from visa_skill.tcmm import BiLstm, bilstm_run, build_contexts, lstm_direction


def zeroed(lstm):
    for p in lstm.params:
        p.data = np.zeros_like(p.data)
    return lstm


def sig(x):
    return 1.0 / (1.0 + math.exp(-x))


def test_zero_parameters_give_zero_contexts():
    rng = np.random.default_rng(0)
    lstms = [zeroed(BiLstm(3, 2, rng)), zeroed(BiLstm(4, 2, rng)), zeroed(BiLstm(4, 2, rng))]
    c = build_contexts(rng.normal(size=(5, 2, 4)), rng.normal(size=(5, 3)), lstms)
    assert c.shape == (5, 3, 4)
    assert not c.data.any()


def test_forget_bias_starts_at_one():
    lstm = BiLstm(2, 3)
    np.testing.assert_array_equal(lstm.fwd.b.data, [0, 0, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0])


def test_scalar_recurrence_by_hand():
    lstm = BiLstm(1, 1)
    # gate order: input, forget, cell, output
    wx = [0.5, -0.3, 0.8, 0.2]
    wh = [0.1, 0.4, -0.6, 0.3]
    b = [0.0, 0.0, 0.0, 0.0]
    for d in (lstm.fwd, lstm.bwd):
        d.w_x.data = np.array([wx])
        d.w_h.data = np.array([wh])
        d.b.data = np.array(b, dtype=float)
    xs = [1.0, -2.0]

    def run(seq):
        h = c = 0.0
        out = []
        for x in seq:
            pre = [wx[g] * x + wh[g] * h + b[g] for g in range(4)]
            i, f, o = sig(pre[0]), sig(pre[1]), sig(pre[3])
            c = f * c + i * math.tanh(pre[2])
            h = o * math.tanh(c)
            out.append(h)
        return out

    fwd = run(xs)
    bwd = run(xs[::-1])[::-1]
    got = bilstm_run(np.array(xs).reshape(2, 1), lstm).data
    np.testing.assert_allclose(got[:, 0], fwd, atol=1e-15)
    np.testing.assert_allclose(got[:, 1], bwd, atol=1e-15)
    # first step from zero state: h = o * tanh(i * tanh(0.8))
    assert got[0, 0] == pytest.approx(sig(0.2) * math.tanh(sig(0.5) * math.tanh(0.8)), abs=1e-15)


def test_scalar_one_step_unit_weights():
    lstm = BiLstm(1, 1)
    d = lstm.fwd
    d.w_x.data = np.ones((1, 4))
    d.w_h.data = np.ones((1, 4))
    d.b.data = np.zeros(4)
    h = lstm_direction(Tensor([[[1.0]]]), d).data.reshape(())
    i = o = sig(1.0)
    c = i * math.tanh(1.0)
    assert c == pytest.approx(0.556771, abs=2e-6)  # product of the 6-place gate values
    # o * tanh(c) = 0.731059 * 0.505576; the often quoted 0.368924 is an arithmetic slip
    assert h == pytest.approx(o * math.tanh(c), abs=1e-15)
    assert h == pytest.approx(0.369606, abs=1e-6)


def test_backward_direction_is_reversed_forward():
    rng = np.random.default_rng(4)
    lstm = BiLstm(3, 2, rng)
    x = rng.normal(size=(1, 6, 3))
    back = lstm_direction(Tensor(x), lstm.fwd, reverse=True).data
    fwd_on_reversed = lstm_direction(Tensor(x[:, ::-1].copy()), lstm.fwd).data
    np.testing.assert_allclose(back, fwd_on_reversed[:, ::-1], atol=1e-15)


def test_groups_are_independent():
    rng = np.random.default_rng(5)
    lstms = [BiLstm(3, 2, rng) for _ in range(1)] + [BiLstm(4, 2, rng) for _ in range(2)]
    g = rng.normal(size=(5, 2, 4))
    pooled = rng.normal(size=(5, 3))
    a = build_contexts(g, pooled, lstms).data
    g2 = g.copy()
    g2[:, 1] += 1.0
    b = build_contexts(g2, pooled, lstms).data
    np.testing.assert_array_equal(a[:, :2], b[:, :2])
    assert not np.allclose(a[:, 2], b[:, 2])


def test_no_groups_is_global_only():
    rng = np.random.default_rng(6)
    lstm = BiLstm(3, 2, rng)
    pooled = rng.normal(size=(4, 3))
    c = build_contexts(None, pooled, [lstm])
    assert c.shape == (4, 1, 4)
    np.testing.assert_array_equal(c.data[:, 0], bilstm_run(pooled, lstm).data)


def test_lstm_count_checked():
    with pytest.raises(ValueError):
        build_contexts(np.zeros((4, 2, 3)), np.zeros((4, 3)), [BiLstm(3, 2)])


def test_bptt_gradients():
    rng = np.random.default_rng(7)
    lstm = BiLstm(2, 3, rng)
    x = Parameter("x", rng.normal(size=(2, 4, 2)))
    fixed = rng.normal(size=(2, 4, 6))
    rep = grad_check(lambda: ops.sum(bilstm_run(x, lstm) * fixed), [x, *lstm.params])
    assert rep.passed, rep.lines()
