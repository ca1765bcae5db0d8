"""
Synthetic imagined-speech sentences
===================================

Builds the surrogate segment bank, draws a few sentences and shows how a
label sequence is extended, assembled and smoothed.
"""

import numpy as np

from eegctc import synth
from eegctc.tensor import make_rng

cfg = synth.SynthConfig()
labels = ("a", "u", "rest")
bank = synth.make_surrogate_bank(cfg, make_rng(0), labels)
print("bank:", dict(zip(bank.labels, bank.counts)), f"C={bank.channels} S={bank.segment_length}")

# each class oscillates at its own frequency
for name, segs in zip(bank.labels, bank.segments):
    spec = np.abs(np.fft.rfft(segs, axis=-1)).mean(axis=(0, 1))
    print(f"  {name:5s} spectral peak at {np.argmax(spec[1:]) + 1} cycles/segment")

print()
for s in synth.synth_dataset(cfg, bank, master_seed=0, count=5):
    words = " ".join(labels[k] for k in s.label)
    ext = " ".join(labels[k] for k in s.extended)
    print(f"{words:24s} | extended: {ext:48s} | signal {s.signal.shape}")

# smoothing blurs the hard joins between segments
s = synth.synth_dataset(cfg, bank, master_seed=0, count=1)[0]
r = make_rng(s.seed)  # replay the sample's draws, skipping the smoothing
ext = synth.extend_labels(synth.gen_label_sequence(cfg, r), cfg, r)
raw = synth.assemble_signal(ext, bank, synth.SynthConfig(smooth_window=1), r)
assert np.allclose(synth.moving_average(raw, cfg.smooth_window), s.signal)
jump = np.abs(np.diff(raw[0])).max()
print(f"\nlargest step between neighbouring samples: raw {jump:.2f}, smoothed {np.abs(np.diff(s.signal[0])).max():.2f}")
