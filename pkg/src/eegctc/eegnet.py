"""Three-layer convolutional feature extractor for single EEG segments.

Layer 1 mixes the C input channels into 20 virtual channels.  Layer 2
treats the 20 x S result as a one-channel picture and convolves it with
five 3 x 33 kernels (long in time).  Layer 3 applies five 11 x 3 kernels
(long across virtual channels) to the five pooled maps.  Each layer is
followed by batch norm, (for layers 2 and 3) 2 x 5 max pooling, and
dropout.  There is no other nonlinearity.

For C = 118, S = 50 the per-segment shapes are
20x50 -> 20x50x5 -> 10x10x5 -> 10x10x5 -> 5x2x5, i.e. 50 features.
"""

import numpy as np

from . import tensor as tc
from .tensor import TRAIN, ConfigError, DimensionError

MIX_FILTERS = 20
L2_FILTERS, L2_KERNEL = 5, (3, 33)
L3_FILTERS, L3_KERNEL = 5, (11, 3)
POOL = (2, 5)


class StateError(RuntimeError):
    pass


def feature_size(segment_length=50):
    h = MIX_FILTERS // POOL[0] // POOL[0]
    w = segment_length // POOL[1] // POOL[1]
    return h * w * L3_FILTERS


def _uniform(rng, shape, fan_in, dtype):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


def init_eegnet_params(channels, rng, dtype=np.float64):
    kh2, kw2 = L2_KERNEL
    kh3, kw3 = L3_KERNEL
    p = {
        "l1_w": _uniform(rng, (MIX_FILTERS, channels), channels, dtype),
        "l1_b": np.zeros(MIX_FILTERS, dtype),
        "l2_w": _uniform(rng, (L2_FILTERS, kh2, kw2, 1), kh2 * kw2, dtype),
        "l2_b": np.zeros(L2_FILTERS, dtype),
        "l3_w": _uniform(rng, (L3_FILTERS, kh3, kw3, L2_FILTERS), kh3 * kw3 * L2_FILTERS, dtype),
        "l3_b": np.zeros(L3_FILTERS, dtype),
    }
    for name, n in (("bn1", MIX_FILTERS), ("bn2", L2_FILTERS), ("bn3", L3_FILTERS)):
        p[name + "_g"] = np.ones(n, dtype)
        p[name + "_b"] = np.zeros(n, dtype)
    return p


def init_eegnet_state(dtype=np.float64):
    return {
        "bn1": tc.init_bn_state(MIX_FILTERS, dtype),
        "bn2": tc.init_bn_state(L2_FILTERS, dtype),
        "bn3": tc.init_bn_state(L3_FILTERS, dtype),
    }


def check_shapes(params, channels):
    expected = {
        "l1_w": (MIX_FILTERS, channels),
        "l2_w": (L2_FILTERS,) + L2_KERNEL + (1,),
        "l3_w": (L3_FILTERS,) + L3_KERNEL + (L2_FILTERS,),
    }
    for name, shape in expected.items():
        if params[name].shape != shape:
            raise ConfigError(f"{name} has shape {params[name].shape}, expected {shape}")


def eegnet_forward(segs, params, state, mode, rng=None, dropout=0.5):
    """Map a batch of segments N x C x S to features N x 50.

    Batch-norm statistics in train mode are pooled over every segment in the
    batch.  Returns ``(features, cache)``; ``cache["trace"]`` lists the
    per-segment activation shapes.
    """
    segs = np.asarray(segs)
    if segs.ndim == 2:
        segs = segs[None]
    if segs.ndim != 3:
        raise DimensionError(f"segments must be N x C x S, got {segs.shape}")
    if segs.shape[1] != params["l1_w"].shape[1]:
        raise ConfigError(
            f"segments have {segs.shape[1]} channels, network expects {params['l1_w'].shape[1]}"
        )
    if mode == TRAIN and dropout > 0 and rng is None:
        raise ConfigError("train-mode dropout needs an rng")
    n = segs.shape[0]
    trace = []

    h, c_mix = tc.channel_mix_conv(segs, params["l1_w"], params["l1_b"])
    trace.append(h.shape[1:])
    h, c_bn1 = tc.batchnorm(h, params["bn1_g"], params["bn1_b"], state["bn1"], mode, axis=1)
    h, m1 = tc.dropout(h, dropout, rng, mode)

    h = h[..., None]
    h, c_conv2 = tc.conv2d_same(h, params["l2_w"], params["l2_b"])
    trace.append(h.shape[1:])
    h, c_bn2 = tc.batchnorm(h, params["bn2_g"], params["bn2_b"], state["bn2"], mode)
    h, c_pool2 = tc.maxpool2d(h, POOL)
    trace.append(h.shape[1:])
    h, m2 = tc.dropout(h, dropout, rng, mode)

    h, c_conv3 = tc.conv2d_same(h, params["l3_w"], params["l3_b"])
    trace.append(h.shape[1:])
    h, c_bn3 = tc.batchnorm(h, params["bn3_g"], params["bn3_b"], state["bn3"], mode)
    h, c_pool3 = tc.maxpool2d(h, POOL)
    trace.append(h.shape[1:])
    h, m3 = tc.dropout(h, dropout, rng, mode)

    pooled_shape = h.shape
    feats = h.reshape(n, -1)
    cache = {
        "layers": (c_mix, c_bn1, m1, c_conv2, c_bn2, c_pool2, m2, c_conv3, c_bn3, c_pool3, m3),
        "pooled_shape": pooled_shape,
        "trace": trace,
    }
    return feats, cache


def eegnet_backward(dfeats, cache):
    """Gradients for every parameter plus the input segments."""
    if cache is None or "layers" not in cache:
        raise StateError("eegnet_backward called without a cached forward pass")
    c_mix, c_bn1, m1, c_conv2, c_bn2, c_pool2, m2, c_conv3, c_bn3, c_pool3, m3 = cache["layers"]
    g = {}
    d = dfeats.reshape(cache["pooled_shape"])
    d = tc.dropout_backward(d, m3)
    d = tc.maxpool2d_backward(d, c_pool3)
    d, g["bn3_g"], g["bn3_b"] = tc.batchnorm_backward(d, c_bn3)
    d, g["l3_w"], g["l3_b"] = tc.conv2d_same_backward(d, c_conv3)

    d = tc.dropout_backward(d, m2)
    d = tc.maxpool2d_backward(d, c_pool2)
    d, g["bn2_g"], g["bn2_b"] = tc.batchnorm_backward(d, c_bn2)
    d, g["l2_w"], g["l2_b"] = tc.conv2d_same_backward(d, c_conv2)

    d = d[..., 0]
    d = tc.dropout_backward(d, m1)
    d, g["bn1_g"], g["bn1_b"] = tc.batchnorm_backward(d, c_bn1)
    dsegs, g["l1_w"], g["l1_b"] = tc.channel_mix_conv_backward(d, c_mix)
    return g, dsegs

