"""
CTC on a toy alphabet
=====================

Two labels ``a`` and ``b`` plus the blank ``_``.  We compare the
forward-backward likelihood with brute-force enumeration over every path,
then decode with best-path.
"""

import itertools
import math

import numpy as np

from eegctc import ctc
from eegctc.tensor import make_rng, softmax_rows

ab = ctc.Alphabet(("a", "b"))
print("blank index:", ab.blank)

# many-to-one map: merge repeats, then drop blanks
for path in ("a _ a b _", "_ a a _ _ a b b", "a a _ a b b"):
    print(f"{path:18s} ->", ab.decode(ctc.collapse(ab.encode(path), ab.blank)))

# random per-frame posteriors over {a, b, _}
y = softmax_rows(make_rng(3).standard_normal((5, 3)) * 2)
label = ab.encode("a b")

loss, grad = ctc.ctc_loss(y, label, ab.blank)
brute = ctc.label_prob_bruteforce(y, label, ab.blank)
print(f"\np(ab | x) forward-backward {math.exp(-loss):.12f}")
print(f"p(ab | x) enumeration      {brute:.12f}")

# every path contributes to exactly one label, so the label probabilities sum to one
total = sum(
    ctc.label_prob_bruteforce(y, lab, ab.blank)
    for n in range(6)
    for lab in itertools.product(range(2), repeat=n)
)
print(f"sum over all labels        {total:.12f}")

print("\nbest path decode:", ab.decode(ctc.greedy_decode(y, ab.blank)) or "(empty)")
print("logit gradient rows sum to zero:", np.allclose(grad.sum(axis=1), 0))
