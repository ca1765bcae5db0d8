"""Connectionist temporal classification.

Label sequences are tuples of integer class indices into an ``Alphabet``;
the blank always sits at the last index of the blank-extended alphabet.
"""

import itertools
from dataclasses import dataclass

import numpy as np

from .tensor import log_softmax_rows, logsumexp

ENUMERATION_LIMIT = 10**7


class EnumerationLimitError(RuntimeError):
    pass


@dataclass(frozen=True)
class Alphabet:
    labels: tuple = ("a", "u", "rest")
    blank_name: str = "_"

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(set(self.labels)) != len(self.labels):
            raise ValueError(f"duplicate labels in {self.labels}")
        if self.blank_name in self.labels:
            raise ValueError(f"blank symbol {self.blank_name!r} collides with a label")
        if not self.labels:
            raise ValueError("alphabet needs at least one label")

    @property
    def blank(self):
        return len(self.labels)

    @property
    def size(self):
        """n = |L| + 1, the width of a posterior row."""
        return len(self.labels) + 1

    def encode(self, names):
        """Map label names (or a whitespace-separated string) to indices.

        The blank name is accepted so paths can be written symbolically.
        """
        if isinstance(names, str):
            names = names.split()
        lookup = {name: i for i, name in enumerate(self.labels)}
        lookup[self.blank_name] = self.blank
        try:
            return tuple(lookup[s] for s in names)
        except KeyError as e:
            raise ValueError(f"unknown label {e.args[0]!r}") from None

    def decode(self, seq):
        names = self.labels + (self.blank_name,)
        return " ".join(names[i] for i in seq)


def collapse(path, blank):
    """Merge runs of identical symbols, then drop blanks."""
    return tuple(k for k, _ in itertools.groupby(path) if k != blank)


def path_prob(y, path):
    y = np.asarray(y)
    if len(path) != y.shape[0]:
        raise ValueError(f"path length {len(path)} != number of frames {y.shape[0]}")
    return float(np.prod(y[np.arange(len(path)), list(path)]))


def label_prob_bruteforce(y, label, blank):
    """Sum of path probabilities over every path collapsing onto ``label``."""
    y = np.asarray(y, dtype=np.float64)
    T, n = y.shape
    if n**T > ENUMERATION_LIMIT:
        raise EnumerationLimitError(f"{n}^{T} paths exceeds the limit of {ENUMERATION_LIMIT}")
    label = tuple(label)
    total = 0.0
    for path in itertools.product(range(n), repeat=T):
        if collapse(path, blank) == label:
            total += path_prob(y, path)
    return total


def extend_with_blanks(label, blank):
    ext = [blank] * (2 * len(label) + 1)
    ext[1::2] = label
    return np.array(ext, dtype=np.intp)


def _forward_backward(logy, label, blank):
    T = logy.shape[0]
    ext = extend_with_blanks(label, blank)
    S = len(ext)
    # transitions s-2 -> s are allowed onto a non-blank that differs from s-2
    skip = np.zeros(S, dtype=bool)
    skip[2:] = (ext[2:] != blank) & (ext[2:] != ext[:-2])

    emit = logy[:, ext]
    alpha = np.full((T, S), -np.inf)
    alpha[0, 0] = emit[0, 0]
    if S > 1:
        alpha[0, 1] = emit[0, 1]
    for t in range(1, T):
        prev = alpha[t - 1]
        cand = np.full((3, S), -np.inf)
        cand[0] = prev
        cand[1, 1:] = prev[:-1]
        cand[2, skip] = prev[np.nonzero(skip)[0] - 2]
        alpha[t] = logsumexp(cand, axis=0) + emit[t]

    beta = np.full((T, S), -np.inf)
    beta[T - 1, S - 1] = emit[T - 1, S - 1]
    if S > 1:
        beta[T - 1, S - 2] = emit[T - 1, S - 2]
    skip_from = np.zeros(S, dtype=bool)
    skip_from[:-2] = skip[2:]
    for t in range(T - 2, -1, -1):
        nxt = beta[t + 1]
        cand = np.full((3, S), -np.inf)
        cand[0] = nxt
        cand[1, :-1] = nxt[1:]
        cand[2, skip_from] = nxt[np.nonzero(skip_from)[0] + 2]
        beta[t] = logsumexp(cand, axis=0) + emit[t]

    ends = alpha[T - 1, S - 1:] if S == 1 else alpha[T - 1, S - 2:]
    return alpha, beta, ext, float(logsumexp(ends))


def ctc_log_likelihood(logy, label, blank):
    """log p(label | x) from per-frame log posteriors, via the alpha recursion."""
    return _forward_backward(np.asarray(logy, dtype=np.float64), tuple(label), blank)[3]


def ctc_loss_from_log_probs(logy, label, blank):
    """Negative log-likelihood and its gradient w.r.t. the pre-softmax logits.

    ``logy`` holds log-softmax outputs (T x n).  An unreachable label gives
    ``(inf, zeros)`` so callers can skip the sample.
    """
    logy = np.asarray(logy, dtype=np.float64)
    alpha, beta, ext, logp = _forward_backward(logy, tuple(label), blank)
    if not np.isfinite(logp):
        return float("inf"), np.zeros_like(logy)
    # alpha and beta both include the emission at t, so subtract it once
    emit = logy[:, ext]
    with np.errstate(invalid="ignore"):
        occ = np.where(np.isfinite(emit), alpha + beta - emit, -np.inf)
    T, n = logy.shape
    log_gamma = np.full((T, n), -np.inf)
    for k in np.unique(ext):
        log_gamma[:, k] = logsumexp(occ[:, ext == k], axis=1)
    grad = np.exp(logy) - np.exp(log_gamma - logp)
    return -logp, grad


def ctc_loss(y, label, blank):
    """Loss and logit-gradient from posterior probabilities ``y``."""
    with np.errstate(divide="ignore"):
        logy = np.log(np.asarray(y, dtype=np.float64))
    return ctc_loss_from_log_probs(logy, label, blank)


def ctc_loss_from_logits(logits, label, blank):
    return ctc_loss_from_log_probs(log_softmax_rows(np.asarray(logits, dtype=np.float64)), label, blank)


def greedy_decode(y, blank):
    """Best path (argmax per frame, lowest index on ties) then collapse."""
    return collapse(np.asarray(y).argmax(axis=1).tolist(), blank)
