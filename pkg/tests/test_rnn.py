import numpy as np
import pytest

from eegctc import rnn
from eegctc.tensor import DimensionError, grad_check, make_rng


def params(D=5, H=4, n=4, seed=0):
    return rnn.init_lstm_params(D, H, n, make_rng(seed))


class TestLstm:
    def test_shapes(self):
        p = params()
        hs, _ = rnn.lstm_forward(np.zeros((6, 5)), p)
        assert hs.shape == (6, 4)
        hs, _ = rnn.lstm_forward(np.zeros((2, 6, 5)), p)
        assert hs.shape == (2, 6, 4)

    def test_forget_bias(self):
        b = params()["lstm_b"]
        np.testing.assert_array_equal(b, [0] * 4 + [1] * 4 + [0] * 8)

    def test_zero_weights_zero_states(self):
        p = {k: np.zeros_like(v) for k, v in params().items()}
        hs, _ = rnn.lstm_forward(make_rng(1).standard_normal((7, 5)), p)
        assert not hs.any()

    def test_bounded(self):
        p = {k: v * 20 for k, v in params().items()}
        hs, _ = rnn.lstm_forward(make_rng(1).standard_normal((30, 5)) * 10, p)
        assert np.all(np.abs(hs) <= 1)

    def test_causal(self):
        p = params()
        x = make_rng(2).standard_normal((8, 5))
        y = x.copy()
        y[5:] += 3.0
        a, _ = rnn.lstm_forward(x, p)
        b, _ = rnn.lstm_forward(y, p)
        np.testing.assert_array_equal(a[:5], b[:5])
        assert np.any(a[5:] != b[5:])

    def test_batch_padding_harmless(self):
        p = params()
        short = make_rng(3).standard_normal((3, 5))
        batch = np.zeros((2, 6, 5))
        batch[0, :3] = short
        batch[1] = make_rng(4).standard_normal((6, 5))
        alone, _ = rnn.lstm_forward(short, p)
        together, _ = rnn.lstm_forward(batch, p)
        np.testing.assert_allclose(together[0, :3], alone, rtol=0, atol=1e-14)

    def test_empty(self):
        with pytest.raises(ValueError):
            rnn.lstm_forward(np.zeros((0, 5)), params())

    def test_feature_mismatch(self):
        with pytest.raises(DimensionError):
            rnn.lstm_forward(np.zeros((3, 6)), params())

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient(self, seed):
        p = params(seed=seed)
        r = make_rng(100 + seed)
        x = r.standard_normal((2, 3, 5))
        w = r.standard_normal((2, 3, 4))

        def f():
            hs, cache = rnn.lstm_forward(x, p)
            _, g = rnn.lstm_backward(w, cache)
            return float((hs * w).sum()), {k: g[k] for k in ("lstm_wx", "lstm_wh", "lstm_b")}

        lstm_p = {k: p[k] for k in ("lstm_wx", "lstm_wh", "lstm_b")}
        assert grad_check(f, lstm_p) < 1e-5

        def fx():
            hs, cache = rnn.lstm_forward(x, p)
            return float((hs * w).sum()), rnn.lstm_backward(w, cache)[0]

        assert grad_check(fx, x) < 1e-5

    def test_single_sequence_backward(self):
        p = params()
        x = make_rng(5).standard_normal((4, 5))
        w = make_rng(6).standard_normal((4, 4))
        hs, cache = rnn.lstm_forward(x, p)
        dx, g = rnn.lstm_backward(w, cache)
        hs_b, cache_b = rnn.lstm_forward(x[None], p)
        dx_b, g_b = rnn.lstm_backward(w[None], cache_b)
        np.testing.assert_array_equal(dx, dx_b[0])
        for k in g:
            np.testing.assert_array_equal(g[k], g_b[k])


class TestProjection:
    def test_zero_weights_uniform(self):
        p = params(n=4)
        p["proj_w"][:] = 0
        y = rnn.project_posteriors(make_rng(0).standard_normal((5, 4)), p)
        np.testing.assert_allclose(y, 0.25, rtol=0, atol=1e-15)

    def test_width_and_row_sums(self):
        for n in (2, 4, 7):
            p = params(n=n)
            y = rnn.project_posteriors(make_rng(n).standard_normal((3, 6, 4)), p)
            assert y.shape == (3, 6, n)
            np.testing.assert_allclose(y.sum(axis=-1), 1.0, rtol=0, atol=1e-12)
            assert np.all(y > 0)

    def test_gradient(self):
        p = params()
        hs = make_rng(7).standard_normal((2, 3, 4))
        w = make_rng(8).standard_normal((2, 3, 4))
        pp = {k: p[k] for k in ("proj_w", "proj_b")}

        def f():
            _, g = rnn.project_logits_backward(w, hs, p)
            return float((rnn.project_logits(hs, p) * w).sum()), g

        assert grad_check(f, pp) < 1e-7

        def fh():
            return float((rnn.project_logits(hs, p) * w).sum()), rnn.project_logits_backward(w, hs, p)[0]

        assert grad_check(fh, hs) < 1e-7
