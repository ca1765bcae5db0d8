"""
Training end to end
===================

A shortened run of the full pipeline (CNN -> LSTM -> CTC) on synthetic
sentences.  32-bit arithmetic and a smaller batch keep it under a minute;
the default configuration (batch 128, 64-bit) gets to a character-level
edit distance of 0 within about 100 iterations.
"""

import tempfile

from eegctc import TrainConfig, run_training

cfg = TrainConfig.from_dict({
    "iterations": 120,
    "batch_size": 32,
    "eval_interval": 20,
    "test_size": 32,
    "dtype": "float32",
})


def show(m, report):
    loss = "   -  " if m.loss is None else f"{m.loss:6.3f}"
    print(f"iter {m.iteration:4d}  train loss {loss}  test loss {m.test_loss:6.3f}  CLED {m.cled:.3f}")


with tempfile.TemporaryDirectory() as out:
    result = run_training(cfg, out, callback=show)

print()
print(result.report.listing(result.model.alphabet))
