"""CNN -> LSTM -> CTC decoding of synthetic imagined-speech EEG, in numpy."""

from .ctc import Alphabet, collapse, ctc_loss, greedy_decode, label_prob_bruteforce, path_prob
from .model import Model, ModelConfig
from .synth import SegmentBank, SynthConfig, SyntheticSample, load_bank, make_surrogate_bank, save_bank
from .train import TrainConfig, edit_distance, evaluate, run_training

__version__ = "0.1.0"
