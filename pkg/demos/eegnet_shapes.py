"""
Feature extractor shapes
========================

Pushes one 118-channel, 50-sample segment through the convolutional
front end and prints the activation shape after every stage.
"""

import numpy as np

from eegctc import eegnet
from eegctc.tensor import EVAL, make_rng

rng = make_rng(0)
params = eegnet.init_eegnet_params(118, rng)
state = eegnet.init_eegnet_state()

segment = rng.standard_normal((1, 118, 50))
feats, cache = eegnet.eegnet_forward(segment, params, state, EVAL)

stages = ["channel mix", "conv 3x33", "pool 2x5", "conv 11x3", "pool 2x5"]
for name, shape in zip(stages, cache["trace"]):
    print(f"{name:12s} {'x'.join(map(str, shape))}")
print("features    ", feats.shape[1])

# with the 8-channel synthetic data only the first kernel changes size
small = eegnet.init_eegnet_params(8, rng)
print("\nparameter counts (C=118 vs C=8):")
for k in params:
    print(f"  {k:6s} {params[k].size:6d} {small[k].size:6d}")
print("total", sum(v.size for v in params.values()), sum(v.size for v in small.values()))
