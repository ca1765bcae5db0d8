"""Dense array ops with hand-written backward passes.

Every layer op comes as a pair ``op(...) -> (out, cache)`` and
``op_backward(dout, cache) -> grads``.  Arrays are plain ``numpy.ndarray``;
spatial maps use the (N, H, W, D) layout so a single map reads H x W x D.
"""

from functools import lru_cache

import numpy as np

TRAIN = "train"
EVAL = "eval"


class ConfigError(ValueError):
    """Raised for shape or hyperparameter combinations an op cannot honour."""


class DimensionError(ValueError):
    """Raised when an input's extent along some axis does not match."""


class GradCheckError(FloatingPointError):
    pass


def make_rng(seed):
    """PCG64 generator; identical seeds give identical streams everywhere."""
    return np.random.Generator(np.random.PCG64(seed))


def derive_seed(*keys):
    """Hash a tuple of non-negative ints into a 64-bit seed."""
    ss = np.random.SeedSequence([int(k) for k in keys])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def _check_mode(mode):
    if mode not in (TRAIN, EVAL):
        raise ConfigError(f"mode must be {TRAIN!r} or {EVAL!r}, got {mode!r}")


# ---------------------------------------------------------------------------
# channel mixing (pointwise 1-d convolution across channels)
# ---------------------------------------------------------------------------

def channel_mix_conv(x, kernels, bias):
    """out[..., k, t] = bias[k] + sum_c kernels[k, c] * x[..., c, t].

    Accepts a single C x T signal or a batch N x C x T.
    """
    x = np.asarray(x)
    if x.ndim not in (2, 3):
        raise DimensionError(f"input must be C x T or N x C x T, got shape {x.shape}")
    if kernels.ndim != 2 or kernels.shape[1] != x.shape[-2]:
        raise DimensionError(
            f"channel axis mismatch: input has {x.shape[-2]} channels, "
            f"kernels expect {kernels.shape[1] if kernels.ndim == 2 else kernels.shape}"
        )
    if bias.shape != (kernels.shape[0],):
        raise DimensionError(f"bias must have shape ({kernels.shape[0]},), got {bias.shape}")
    out = np.matmul(kernels, x) + bias[:, None]
    return out, (x, kernels)


def channel_mix_conv_backward(dout, cache):
    x, kernels = cache
    dx = np.matmul(kernels.T, dout)
    if x.ndim == 2:
        dk = dout @ x.T
        db = dout.sum(axis=1)
    else:
        dk = np.einsum("nkt,nct->kc", dout, x)
        db = dout.sum(axis=(0, 2))
    return dx, dk, db


# ---------------------------------------------------------------------------
# "same" 2-d convolution
# ---------------------------------------------------------------------------
# Each kernel row is folded into a banded (W*D) x (W*F) matrix so the whole
# convolution becomes kh batched matmuls over zero-padded rows.

@lru_cache(maxsize=None)
def _band_index(width, kw, depth, filters):
    pad = (kw - 1) // 2
    w_in, d, w_out, f = np.meshgrid(
        np.arange(width), np.arange(depth), np.arange(width), np.arange(filters),
        indexing="ij",
    )
    j = w_in - w_out + pad
    ok = (j >= 0) & (j < kw)
    w_in, d, w_out, f, j = (a[ok] for a in (w_in, d, w_out, f, j))
    rows = w_in * depth + d
    cols = w_out * filters + f
    flat = (f * kw + j) * depth + d
    for a in (rows, cols, f, j, d, flat):
        a.flags.writeable = False
    return rows, cols, f, j, d, flat


def _band_matrices(kernels, width):
    n_f, kh, kw, depth = kernels.shape
    rows, cols, f, j, d, _ = _band_index(width, kw, depth, n_f)
    band = np.zeros((kh, width * depth, width * n_f), dtype=kernels.dtype)
    band[:, rows, cols] = kernels[f, :, j, d].T
    return band


def conv2d_same(x, kernels, bias):
    """Zero-padded cross-correlation keeping H x W.

    x: N x H x W x D (or a single H x W x D), kernels: F x kh x kw x D.
    """
    single = x.ndim == 3
    if single:
        x = x[None]
    if x.ndim != 4:
        raise DimensionError(f"input must be H x W x D or N x H x W x D, got {x.shape}")
    n_f, kh, kw, depth = kernels.shape
    if kh % 2 == 0 or kw % 2 == 0:
        raise ConfigError(f"kernel extents must be odd for same padding, got {kh}x{kw}")
    if x.shape[3] != depth:
        raise DimensionError(f"depth axis mismatch: input {x.shape[3]}, kernels {depth}")
    if bias.shape != (n_f,):
        raise DimensionError(f"bias must have shape ({n_f},), got {bias.shape}")
    n, h, w, _ = x.shape
    ph = (kh - 1) // 2
    xp = np.zeros((n, h + 2 * ph, w * depth), dtype=np.result_type(x, kernels))
    xp[:, ph:ph + h] = x.reshape(n, h, w * depth)
    band = _band_matrices(kernels, w)
    out = xp[:, 0:h] @ band[0]
    for i in range(1, kh):
        out += xp[:, i:i + h] @ band[i]
    out = out.reshape(n, h, w, n_f) + bias
    if single:
        out = out[0]
    return out, (xp, band, kernels.shape, (n, h, w, depth), single)


def conv2d_same_backward(dout, cache):
    xp, band, kshape, (n, h, w, depth), single = cache
    n_f, kh, kw, _ = kshape
    if single:
        dout = dout[None]
    db = dout.sum(axis=(0, 1, 2))
    d2 = dout.reshape(n, h, w * n_f)
    dxp = np.zeros_like(xp)
    flat_d = d2.reshape(n * h, w * n_f)
    rows, cols, _, _, _, flat = _band_index(w, kw, depth, n_f)
    dk = np.empty((kh, n_f * kw * depth), dtype=dout.dtype)
    for i in range(kh):
        dxp[:, i:i + h] += d2 @ band[i].T
        dband = xp[:, i:i + h].reshape(n * h, w * depth).T @ flat_d
        dk[i] = np.bincount(flat, weights=dband[rows, cols], minlength=n_f * kw * depth)
    dk = dk.reshape(kh, n_f, kw, depth).transpose(1, 0, 2, 3)
    ph = (kh - 1) // 2
    dx = dxp[:, ph:ph + h].reshape(n, h, w, depth)
    if single:
        dx = dx[0]
    return dx, np.ascontiguousarray(dk), db


# ---------------------------------------------------------------------------
# batch normalisation
# ---------------------------------------------------------------------------

def init_bn_state(features, dtype=np.float64):
    return {"mean": np.zeros(features, dtype=dtype), "var": np.ones(features, dtype=dtype)}


def _feature_sum(a, axis):
    """Sum over every axis except ``axis``."""
    if axis == a.ndim - 1:
        flat = a.reshape(-1, a.shape[-1])
        return np.ones(flat.shape[0], a.dtype) @ flat  # gemv beats a strided reduce
    return a.sum(axis=tuple(i for i in range(a.ndim) if i != axis))


def batchnorm(x, gamma, beta, state, mode, axis=-1, eps=1e-5, momentum=0.9):
    """Normalise per feature along ``axis``, pooling statistics over all other axes.

    In train mode ``state`` (running mean/var) is updated in place.
    """
    _check_mode(mode)
    axis = axis % x.ndim
    if gamma.shape != (x.shape[axis],) or beta.shape != gamma.shape:
        raise DimensionError(
            f"gamma/beta must have shape ({x.shape[axis]},), got {gamma.shape}/{beta.shape}"
        )
    shape = [1] * x.ndim
    shape[axis] = -1
    if mode == TRAIN:
        m = x.size // x.shape[axis]
        mean = _feature_sum(x, axis) / m
        xc = x - mean.reshape(shape)
        var = _feature_sum(xc * xc, axis) / m
        state["mean"] = momentum * state["mean"] + (1 - momentum) * mean
        state["var"] = momentum * state["var"] + (1 - momentum) * var
    else:
        mean, var = state["mean"], state["var"]
        xc = x - mean.reshape(shape)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv_std.reshape(shape)
    out = xhat * gamma.reshape(shape) + beta.reshape(shape)
    return out, (xhat, gamma, inv_std, shape, axis, mode)


def batchnorm_backward(dout, cache):
    xhat, gamma, inv_std, shape, axis, mode = cache
    dgamma = _feature_sum(dout * xhat, axis)
    dbeta = _feature_sum(dout, axis)
    scale = (gamma * inv_std).reshape(shape)
    if mode == EVAL:
        return dout * scale, dgamma, dbeta
    m = dout.size // gamma.size
    # dgamma/dbeta are exactly the sums the batch-statistics terms need
    dx = scale * (dout - (dbeta / m).reshape(shape) - xhat * (dgamma / m).reshape(shape))
    return dx, dgamma, dbeta


# ---------------------------------------------------------------------------
# pooling, dropout, reshaping
# ---------------------------------------------------------------------------

def maxpool2d(x, pool):
    """Non-overlapping max pooling over the H and W axes of N x H x W x D."""
    single = x.ndim == 3
    if single:
        x = x[None]
    ph, pw = pool
    n, h, w, d = x.shape
    if h % ph or w % pw:
        raise ConfigError(f"pool {pool} does not divide spatial extent {h}x{w}")
    win = x.reshape(n, h // ph, ph, w // pw, pw, d).transpose(0, 1, 3, 5, 2, 4)
    win = win.reshape(n, h // ph, w // pw, d, ph * pw)
    arg = win.argmax(axis=-1)  # first maximum on ties
    out = np.take_along_axis(win, arg[..., None], axis=-1)[..., 0]
    if single:
        out = out[0]
    return out, (arg, x.shape, pool, single)


def maxpool2d_backward(dout, cache):
    arg, (n, h, w, d), (ph, pw), single = cache
    if single:
        dout = dout[None]
    dwin = np.zeros((n, h // ph, w // pw, d, ph * pw), dtype=dout.dtype)
    np.put_along_axis(dwin, arg[..., None], dout[..., None], axis=-1)
    dx = dwin.reshape(n, h // ph, w // pw, d, ph, pw).transpose(0, 1, 4, 2, 5, 3)
    dx = dx.reshape(n, h, w, d)
    return dx[0] if single else dx


def dropout(x, p, rng, mode):
    """Inverted dropout; eval mode and p == 0 are exact identities."""
    _check_mode(mode)
    if not 0.0 <= p < 1.0:
        raise ConfigError(f"dropout rate must lie in [0, 1), got {p}")
    if mode == EVAL or p == 0.0:
        return x, None
    mask = (rng.random(x.shape) >= p).astype(x.dtype) / (1.0 - p)
    return x * mask, mask


def dropout_backward(dout, mask):
    return dout if mask is None else dout * mask


def flatten(x, keep=1):
    """Collapse every axis after the first ``keep`` ones."""
    return x.reshape(x.shape[:keep] + (-1,)), x.shape


def unflatten(dx, shape):
    return dx.reshape(shape)


# ---------------------------------------------------------------------------
# pointwise nonlinearities and dense algebra
# ---------------------------------------------------------------------------

def sigmoid(x):
    # split by sign so exp never overflows
    out = np.empty_like(x, dtype=np.result_type(x, np.float32))
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def sigmoid_backward(dout, y):
    return dout * y * (1.0 - y)


def tanh_backward(dout, y):
    return dout * (1.0 - y * y)


def matmul(a, b):
    return a @ b, (a, b)


def matmul_backward(dout, cache):
    a, b = cache
    return dout @ np.swapaxes(b, -1, -2), np.swapaxes(a, -1, -2) @ dout


def softmax_rows(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_rows(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax_rows_backward(dout, y):
    return y * (dout - (dout * y).sum(axis=-1, keepdims=True))


def logsumexp(a, axis=None):
    """log(sum(exp(a))) that tolerates rows of all -inf."""
    a = np.asarray(a)
    amax = np.max(a, axis=axis, keepdims=True)
    amax = np.where(np.isfinite(amax), amax, 0.0)
    with np.errstate(divide="ignore"):
        out = np.log(np.sum(np.exp(a - amax), axis=axis, keepdims=True)) + amax
    if axis is None:
        return out.reshape(())[()]
    return np.squeeze(out, axis=axis)


# ---------------------------------------------------------------------------
# finite-difference verification
# ---------------------------------------------------------------------------

def numeric_grad(f, x, h=1e-6):
    """Central differences of scalar ``f()`` w.r.t. array ``x`` (perturbed in place)."""
    g = np.zeros_like(x, dtype=np.float64)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + h
        fp = f()
        x[idx] = orig - h
        fm = f()
        x[idx] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise GradCheckError(f"non-finite loss at index {idx}: f(+h)={fp}, f(-h)={fm}")
        g[idx] = (fp - fm) / (2 * h)
    return g


def relative_error(analytic, numeric, floor=1e-8):
    analytic = np.asarray(analytic, dtype=np.float64)
    numeric = np.asarray(numeric, dtype=np.float64)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    err = np.abs(analytic - numeric) / denom
    return float(err.max()) if err.size else 0.0


def grad_check(f, params, h=1e-6):
    """Max relative error between analytic and central-difference gradients.

    ``f()`` must return ``(loss, grads)`` where ``grads`` is keyed like
    ``params`` (a dict of float64 arrays, perturbed in place), or a single
    array paired with a single array.
    """
    if isinstance(params, np.ndarray):
        params = {"x": params}
        inner = f

        def f():
            loss, g = inner()
            return loss, {"x": g}

    for p in params.values():
        if p.dtype != np.float64:
            raise GradCheckError("gradient checks require float64 parameters")
    loss, analytic = f()
    if not np.isfinite(loss):
        raise GradCheckError(f"non-finite loss {loss}")
    analytic = {k: np.array(v, dtype=np.float64, copy=True) for k, v in analytic.items()}
    worst = 0.0
    for name, p in params.items():
        num = numeric_grad(lambda: f()[0], p, h)
        worst = max(worst, relative_error(analytic[name], num))
    return worst
