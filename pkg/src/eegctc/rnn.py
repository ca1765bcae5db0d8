"""Single-layer unidirectional LSTM and the per-frame label projection.

Gate blocks are packed in the order input, forget, cell candidate, output.
Sequences are batched as B x T x D; shorter sequences are right-padded and
since the recurrence is strictly causal the padding never reaches a valid
frame.
"""

import numpy as np

from . import tensor as tc


def init_lstm_params(input_size, hidden, n_out, rng, dtype=np.float64):
    bound = 1.0 / np.sqrt(hidden)
    b = np.zeros(4 * hidden, dtype)
    b[hidden:2 * hidden] = 1.0  # forget gate starts open
    return {
        "lstm_wx": rng.uniform(-bound, bound, (input_size, 4 * hidden)).astype(dtype),
        "lstm_wh": rng.uniform(-bound, bound, (hidden, 4 * hidden)).astype(dtype),
        "lstm_b": b,
        "proj_w": rng.uniform(-bound, bound, (hidden, n_out)).astype(dtype),
        "proj_b": np.zeros(n_out, dtype),
    }


def lstm_forward(xs, params):
    """Hidden states for every frame, from zero initial hidden and cell state.

    ``xs`` is T x D or B x T x D; the output matches with D replaced by H.
    """
    xs = np.asarray(xs)
    single = xs.ndim == 2
    if single:
        xs = xs[None]
    B, T, _ = xs.shape
    if T < 1:
        raise ValueError("LSTM input sequence is empty")
    wx, wh, b = params["lstm_wx"], params["lstm_wh"], params["lstm_b"]
    if xs.shape[-1] != wx.shape[0]:
        raise tc.DimensionError(f"LSTM expects {wx.shape[0]} input features, got {xs.shape[-1]}")
    H = wh.shape[0]
    dtype = np.result_type(xs, wx)

    xproj = xs @ wx + b  # input contribution for all frames at once
    gates = np.empty((B, T, 4 * H), dtype)
    cells = np.empty((B, T, H), dtype)
    tanh_c = np.empty((B, T, H), dtype)
    hs = np.empty((B, T, H), dtype)
    h = np.zeros((B, H), dtype)
    c = np.zeros((B, H), dtype)
    for t in range(T):
        a = xproj[:, t] + h @ wh
        g = gates[:, t]
        g[:, :2 * H] = tc.sigmoid(a[:, :2 * H])
        g[:, 2 * H:3 * H] = np.tanh(a[:, 2 * H:3 * H])
        g[:, 3 * H:] = tc.sigmoid(a[:, 3 * H:])
        c = g[:, H:2 * H] * c + g[:, :H] * g[:, 2 * H:3 * H]
        cells[:, t] = c
        tanh_c[:, t] = np.tanh(c)
        h = g[:, 3 * H:] * tanh_c[:, t]
        hs[:, t] = h
    cache = (xs, gates, cells, tanh_c, hs, wx, wh, single)
    return (hs[0] if single else hs), cache


def lstm_backward(dhs, cache):
    """Backprop through time; returns (dxs, grads)."""
    xs, gates, cells, tanh_c, hs, wx, wh, single = cache
    if single:
        dhs = dhs[None]
    B, T, H = hs.shape
    dgates = np.empty_like(gates)
    dh_next = np.zeros((B, H), hs.dtype)
    dc_next = np.zeros((B, H), hs.dtype)
    for t in range(T - 1, -1, -1):
        g = gates[:, t]
        i, f, cand, o = g[:, :H], g[:, H:2 * H], g[:, 2 * H:3 * H], g[:, 3 * H:]
        dh = dhs[:, t] + dh_next
        dc = dc_next + tc.tanh_backward(dh * o, tanh_c[:, t])
        c_prev = cells[:, t - 1] if t > 0 else np.zeros((B, H), hs.dtype)
        da = dgates[:, t]
        da[:, :H] = tc.sigmoid_backward(dc * cand, i)
        da[:, H:2 * H] = tc.sigmoid_backward(dc * c_prev, f)
        da[:, 2 * H:3 * H] = tc.tanh_backward(dc * i, cand)
        da[:, 3 * H:] = tc.sigmoid_backward(dh * tanh_c[:, t], o)
        dh_next = da @ wh.T
        dc_next = dc * f
    h_prev = np.concatenate([np.zeros((B, 1, H), hs.dtype), hs[:, :-1]], axis=1)
    grads = {
        "lstm_wx": np.einsum("btd,btg->dg", xs, dgates),
        "lstm_wh": np.einsum("bth,btg->hg", h_prev, dgates),
        "lstm_b": dgates.sum(axis=(0, 1)),
    }
    dxs = dgates @ wx.T
    return (dxs[0] if single else dxs), grads


def project_logits(hs, params):
    return hs @ params["proj_w"] + params["proj_b"]


def project_logits_backward(dlogits, hs, params):
    """Returns (dhs, grads) for the per-frame affine projection."""
    flat_h = hs.reshape(-1, hs.shape[-1])
    flat_d = dlogits.reshape(-1, dlogits.shape[-1])
    grads = {"proj_w": flat_h.T @ flat_d, "proj_b": flat_d.sum(axis=0)}
    return dlogits @ params["proj_w"].T, grads


def project_posteriors(hs, params):
    """Per-frame affine map to n label scores, then a row softmax."""
    return tc.softmax_rows(project_logits(hs, params))
