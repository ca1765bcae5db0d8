"""The full decoder: segment-wise CNN features, LSTM, projection, CTC."""

import logging
from dataclasses import dataclass, field

import numpy as np

from . import ctc
from . import eegnet as cnn
from . import rnn
from .tensor import EVAL, TRAIN, ConfigError, log_softmax_rows, softmax_rows

log = logging.getLogger(__name__)


@dataclass
class ModelConfig:
    channels: int = 8
    segment_length: int = 50
    hidden: int = 64
    labels: tuple = ("a", "u", "rest")
    dropout: float = 0.5

    def __post_init__(self):
        self.labels = tuple(self.labels)
        if self.segment_length % (cnn.POOL[1] ** 2):
            raise ConfigError(
                f"segment_length must be a multiple of {cnn.POOL[1] ** 2}, got {self.segment_length}"
            )
        if self.hidden < 1:
            raise ConfigError(f"hidden must be >= 1, got {self.hidden}")
        if not self.labels:
            raise ConfigError("need at least one label")
        if not 0.0 <= self.dropout < 1.0:
            raise ConfigError(f"dropout must lie in [0, 1), got {self.dropout}")

    def to_dict(self):
        return {
            "channels": self.channels,
            "segment_length": self.segment_length,
            "hidden": self.hidden,
            "labels": list(self.labels),
            "dropout": self.dropout,
        }


@dataclass
class Model:
    cfg: ModelConfig
    params: dict
    state: dict = field(default_factory=dict)

    @classmethod
    def init(cls, cfg, rng, dtype=np.float64):
        params = cnn.init_eegnet_params(cfg.channels, rng, dtype)
        n_feat = cnn.feature_size(cfg.segment_length)
        params.update(rnn.init_lstm_params(n_feat, cfg.hidden, len(cfg.labels) + 1, rng, dtype))
        return cls(cfg, params, cnn.init_eegnet_state(dtype))

    @property
    def alphabet(self):
        return ctc.Alphabet(self.cfg.labels)

    @property
    def dtype(self):
        return self.params["l1_w"].dtype

    def split_segments(self, signal):
        """C x (S*M) signal -> M x C x S; a short trailing remainder is dropped."""
        signal = np.asarray(signal)
        C, width = signal.shape
        if C != self.cfg.channels:
            raise ConfigError(f"signal has {C} channels, model expects {self.cfg.channels}")
        S = self.cfg.segment_length
        M, rest = divmod(width, S)
        if rest:
            log.warning("dropping %d trailing samples (signal width %d, segment %d)", rest, width, S)
        if M == 0:
            raise ValueError(f"signal of width {width} holds no complete {S}-sample segment")
        return signal[:, : M * S].reshape(C, M, S).transpose(1, 0, 2).astype(self.dtype)

    def forward(self, signals, mode, rng=None):
        """Logits B x Tmax x n for a batch of signals, plus the frame counts."""
        segs = [self.split_segments(s) for s in signals]
        lengths = [len(s) for s in segs]
        dropout = self.cfg.dropout if mode == TRAIN else 0.0
        feats, c_cnn = cnn.eegnet_forward(
            np.concatenate(segs), self.params, self.state, mode, rng, dropout
        )
        B, Tmax = len(segs), max(lengths)
        xs = np.zeros((B, Tmax, feats.shape[1]), feats.dtype)
        offsets = np.cumsum([0] + lengths)
        for b in range(B):
            xs[b, : lengths[b]] = feats[offsets[b]:offsets[b + 1]]
        hs, c_lstm = rnn.lstm_forward(xs, self.params)
        logits = rnn.project_logits(hs, self.params)
        return logits, lengths, (c_cnn, c_lstm, hs, offsets)

    def backward(self, dlogits, lengths, cache):
        c_cnn, c_lstm, hs, offsets = cache
        dhs, grads = rnn.project_logits_backward(dlogits, hs, self.params)
        dxs, g = rnn.lstm_backward(dhs, c_lstm)
        grads.update(g)
        dfeats = np.concatenate([dxs[b, :n] for b, n in enumerate(lengths)])
        g, _ = cnn.eegnet_backward(dfeats, c_cnn)
        grads.update(g)
        return grads

    def loss_and_grads(self, signals, labels, rng=None, mode=TRAIN):
        """Mean CTC loss over feasible samples and its parameter gradients.

        Returns ``(mean_loss, grads, skipped)``; samples whose label cannot
        be aligned to their frame count are excluded and counted.
        """
        logits, lengths, cache = self.forward(signals, mode, rng)
        blank = self.alphabet.blank
        dlogits = np.zeros(logits.shape, np.float64)
        losses = []
        for b, (n, label) in enumerate(zip(lengths, labels)):
            loss, g = ctc.ctc_loss_from_log_probs(log_softmax_rows(logits[b, :n].astype(np.float64)), label, blank)
            if np.isfinite(loss):
                losses.append(loss)
                dlogits[b, :n] = g
            else:
                dlogits[b] = 0.0
        skipped = len(signals) - len(losses)
        if not losses:
            raise RuntimeError(
                f"all {len(signals)} samples have infeasible alignments; check the synthesis config"
            )
        dlogits /= len(losses)
        grads = self.backward(dlogits.astype(logits.dtype), lengths, cache)
        return float(np.mean(losses)), grads, skipped

    def log_posteriors(self, signal):
        """Eval-mode per-frame log label probabilities, T x n."""
        logits, _, _ = self.forward([signal], EVAL)
        return log_softmax_rows(logits[0].astype(np.float64))

    def posteriors(self, signal):
        logits, _, _ = self.forward([signal], EVAL)
        return softmax_rows(logits[0].astype(np.float64))

    def decode(self, signal):
        return ctc.greedy_decode(self.log_posteriors(signal), self.alphabet.blank)
