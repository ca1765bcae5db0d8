"""Synthetic sentence-level imagined-speech EEG.

A sentence is a random label sequence with no two adjacent labels equal.
Each label is repeated a random number of times, each repeat draws a
segment of that class from a ``SegmentBank``, and the concatenated signal
is smoothed channel by channel with a centred moving average.

Banks and sample sets round-trip through small little-endian binary
containers (``EEGB`` and ``EEGS``).
"""

import struct
from dataclasses import asdict, dataclass, field

import numpy as np

from .tensor import ConfigError, derive_seed, make_rng

BANK_MAGIC = b"EEGB"
SAMPLES_MAGIC = b"EEGS"
FORMAT_VERSION = 1


class FormatError(ValueError):
    """Base class for container parse failures."""


class HeaderError(FormatError):
    pass


class TruncatedError(FormatError):
    pass


class BankValidationError(FormatError):
    pass


@dataclass
class SynthConfig:
    label_min: int = 2
    label_max: int = 8
    repeat_min: int = 1
    repeat_max: int = 4
    smooth_window: int = 5
    channels: int = 8
    segment_length: int = 50
    classes: int = 3
    segments_per_class: int = 30
    # surrogate bank only
    frequencies: tuple = (3.0, 7.0, 11.0)
    amplitude: float = 1.0
    noise_std: float = 0.3
    amplitude_jitter: float = 0.2
    random_phase: bool = True

    def __post_init__(self):
        self.frequencies = tuple(float(f) for f in self.frequencies)
        if not 1 <= self.label_min <= self.label_max:
            raise ConfigError(f"need 1 <= label_min <= label_max, got {self.label_min}, {self.label_max}")
        if not 1 <= self.repeat_min <= self.repeat_max:
            raise ConfigError(f"need 1 <= repeat_min <= repeat_max, got {self.repeat_min}, {self.repeat_max}")
        if self.smooth_window < 1 or self.smooth_window % 2 == 0:
            raise ConfigError(f"smooth_window must be odd and >= 1, got {self.smooth_window}")
        if self.classes < 1:
            raise ConfigError("need at least one class")
        if self.classes == 1 and self.label_max > 1:
            raise ConfigError("a single class cannot form sequences without adjacent repeats")

    def to_dict(self):
        d = asdict(self)
        d["frequencies"] = list(self.frequencies)
        return d


@dataclass
class SegmentBank:
    """Per-class stacks of C x S segments, keyed by position in ``labels``.

    Segments are held as float32, the precision of the on-disk container.
    """

    labels: tuple
    segments: list  # one (count, C, S) array per label

    def __post_init__(self):
        self.labels = tuple(self.labels)
        if not self.labels:
            raise BankValidationError("bank has no classes")
        if len(self.segments) != len(self.labels):
            raise BankValidationError(
                f"{len(self.labels)} labels but {len(self.segments)} segment groups"
            )
        self.segments = [np.asarray(s, dtype=np.float32) for s in self.segments]
        shape = None
        for name, segs in zip(self.labels, self.segments):
            if segs.ndim != 3:
                raise BankValidationError(f"class {name!r}: expected (count, C, S), got {segs.shape}")
            if segs.shape[0] == 0:
                raise BankValidationError(f"class {name!r} has no segments")
            if shape is None:
                shape = segs.shape[1:]
            elif segs.shape[1:] != shape:
                raise BankValidationError(
                    f"class {name!r}: segment shape {segs.shape[1:]} differs from {shape}"
                )
            if not np.all(np.isfinite(segs)):
                raise BankValidationError(f"class {name!r} contains non-finite values")

    @property
    def channels(self):
        return self.segments[0].shape[1]

    @property
    def segment_length(self):
        return self.segments[0].shape[2]

    @property
    def counts(self):
        return tuple(len(s) for s in self.segments)


@dataclass
class SyntheticSample:
    signal: np.ndarray  # C x (S * M)
    label: tuple  # unextended, class indices
    seed: int
    extended: tuple = field(default=(), repr=False)


def make_surrogate_bank(cfg, rng, labels=None):
    """Class-conditioned sinusoid-plus-noise stand-in for recorded segments.

    Class k oscillates at ``cfg.frequencies[k]`` cycles per segment.  Each
    channel of a class gets a fixed amplitude gain in
    ``1 +/- amplitude_jitter``; each segment gets a random phase (unless
    disabled) and white Gaussian noise.
    """
    if labels is None:
        labels = tuple(f"class{k}" for k in range(cfg.classes))
    if len(labels) != cfg.classes:
        raise ConfigError(f"{len(labels)} labels for {cfg.classes} classes")
    freqs = cfg.frequencies
    if len(freqs) < cfg.classes:
        raise ConfigError(f"{cfg.classes} classes need as many frequencies, got {freqs}")
    freqs = freqs[: cfg.classes]
    if len(set(freqs)) != len(freqs):
        raise ConfigError(f"class frequencies must be distinct, got {freqs}")
    C, S = cfg.channels, cfg.segment_length
    t = np.arange(S)
    groups = []
    for f in freqs:
        gain = 1.0 + cfg.amplitude_jitter * rng.uniform(-1.0, 1.0, size=(C, 1))
        if cfg.random_phase:
            phase = rng.uniform(0.0, 2 * np.pi, size=(cfg.segments_per_class, 1, 1))
        else:
            phase = np.zeros((cfg.segments_per_class, 1, 1))
        clean = cfg.amplitude * gain * np.sin(2 * np.pi * f * t / S + phase)
        noise = cfg.noise_std * rng.standard_normal(clean.shape) if cfg.noise_std > 0 else 0.0
        groups.append(clean + noise)
    return SegmentBank(labels, groups)


def gen_label_sequence(cfg, rng):
    """Uniform length in [label_min, label_max], uniform labels, no adjacent repeats."""
    length = int(rng.integers(cfg.label_min, cfg.label_max + 1))
    seq = [int(rng.integers(cfg.classes))]
    for _ in range(length - 1):
        # draw from the classes other than the previous one
        k = int(rng.integers(cfg.classes - 1))
        seq.append(k + (k >= seq[-1]))
    return tuple(seq)


def extend_labels(label, cfg, rng):
    reps = rng.integers(cfg.repeat_min, cfg.repeat_max + 1, size=len(label))
    return tuple(k for k, r in zip(label, reps) for _ in range(int(r)))


def moving_average(signal, window):
    """Centred moving average along the last axis; the window shrinks at the edges."""
    if window == 1:
        return signal.astype(np.float64)
    half = window // 2
    n = signal.shape[-1]
    csum = np.zeros(signal.shape[:-1] + (n + 1,), dtype=np.float64)
    np.cumsum(signal, axis=-1, out=csum[..., 1:])
    idx = np.arange(n)
    lo = np.maximum(idx - half, 0)
    hi = np.minimum(idx + half + 1, n)
    return (csum[..., hi] - csum[..., lo]) / (hi - lo)


def assemble_signal(extended, bank, cfg, rng):
    missing = {k for k in extended if not 0 <= k < len(bank.labels)}
    if missing:
        raise ConfigError(f"bank has no class for indices {sorted(missing)}")
    picks = [bank.segments[k][rng.integers(len(bank.segments[k]))] for k in extended]
    signal = np.concatenate(picks, axis=1) if picks else np.zeros((bank.channels, 0))
    return moving_average(signal, cfg.smooth_window)


def synth_sample(cfg, bank, seed):
    """One sample, a pure function of (cfg, bank, seed)."""
    rng = make_rng(seed)
    label = gen_label_sequence(cfg, rng)
    extended = extend_labels(label, cfg, rng)
    signal = assemble_signal(extended, bank, cfg, rng)
    return SyntheticSample(signal=signal, label=label, seed=seed, extended=extended)


def synth_dataset(cfg, bank, master_seed, count, stream=0, start=0):
    """Samples ``start .. start+count-1`` of a stream; each seeded independently."""
    return [
        synth_sample(cfg, bank, derive_seed(master_seed, stream, i))
        for i in range(start, start + count)
    ]


# ---------------------------------------------------------------------------
# binary containers
# ---------------------------------------------------------------------------

class _Reader:
    def __init__(self, data, what):
        self.data = data
        self.pos = 0
        self.what = what

    def take(self, nbytes, field_name):
        end = self.pos + nbytes
        if end > len(self.data):
            raise TruncatedError(
                f"{self.what}: truncated while reading {field_name}: expected at least "
                f"{end} bytes, file has {len(self.data)}"
            )
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def u32(self, field_name):
        return struct.unpack("<I", self.take(4, field_name))[0]

    def string(self, field_name):
        n = self.u32(field_name + " length")
        try:
            return self.take(n, field_name).decode("utf-8")
        except UnicodeDecodeError as e:
            raise HeaderError(f"{self.what}: {field_name} is not valid UTF-8") from e

    def floats(self, count, field_name):
        return np.frombuffer(self.take(4 * count, field_name), dtype="<f4").astype(np.float32)

    def finish(self):
        if self.pos != len(self.data):
            raise FormatError(f"{self.what}: {len(self.data) - self.pos} trailing bytes")


def _pack_string(s):
    b = s.encode("utf-8")
    return struct.pack("<I", len(b)) + b


def _pack_floats(a):
    return np.ascontiguousarray(a, dtype="<f4").tobytes()


def _read_header(r, magic):
    got = r.take(4, "magic")
    if got != magic:
        raise HeaderError(f"{r.what}: bad magic {got!r}, expected {magic!r}")
    version = r.u32("version")
    if version != FORMAT_VERSION:
        raise HeaderError(f"{r.what}: unsupported version {version}")
    C, S, n_classes = r.u32("channels"), r.u32("segment length"), r.u32("class count")
    if C == 0 or S == 0:
        raise HeaderError(f"{r.what}: zero channels or segment length ({C}, {S})")
    return C, S, n_classes


def bank_to_bytes(bank):
    C, S = bank.channels, bank.segment_length
    out = [BANK_MAGIC, struct.pack("<IIII", FORMAT_VERSION, C, S, len(bank.labels))]
    for name, segs in zip(bank.labels, bank.segments):
        out.append(_pack_string(name))
        out.append(struct.pack("<I", len(segs)))
        out.append(_pack_floats(segs))
    return b"".join(out)


def bank_from_bytes(data, what="bank"):
    r = _Reader(data, what)
    C, S, n_classes = _read_header(r, BANK_MAGIC)
    if n_classes == 0:
        raise BankValidationError(f"{what}: empty class list")
    labels, groups = [], []
    for k in range(n_classes):
        labels.append(r.string(f"class {k} label"))
        count = r.u32(f"class {k} segment count")
        groups.append(r.floats(count * C * S, f"class {k} segments").reshape(count, C, S))
    r.finish()
    if len(set(labels)) != len(labels):
        raise BankValidationError(f"{what}: duplicate class labels {labels}")
    return SegmentBank(tuple(labels), groups)


def save_bank(bank, path):
    with open(path, "wb") as fh:
        fh.write(bank_to_bytes(bank))


def load_bank(path):
    with open(path, "rb") as fh:
        return bank_from_bytes(fh.read(), what=str(path))


def samples_to_bytes(samples, labels, segment_length):
    if not samples:
        raise ValueError("no samples to write")
    C = samples[0].signal.shape[0]
    out = [SAMPLES_MAGIC, struct.pack("<IIII", FORMAT_VERSION, C, segment_length, len(labels))]
    out += [_pack_string(name) for name in labels]
    out.append(struct.pack("<I", len(samples)))
    for s in samples:
        C_s, width = s.signal.shape
        if C_s != C or width % segment_length:
            raise ValueError(f"sample signal shape {s.signal.shape} incompatible with C={C}, S={segment_length}")
        out.append(struct.pack(f"<I{len(s.label)}I", len(s.label), *s.label))
        out.append(struct.pack("<I", width // segment_length))
        out.append(_pack_floats(s.signal))
    return b"".join(out)


def samples_from_bytes(data, what="samples"):
    """Returns (labels, segment_length, samples); samples carry seed 0.

    Signals come back as float64 widened from the stored float32 values.
    """
    r = _Reader(data, what)
    C, S, n_classes = _read_header(r, SAMPLES_MAGIC)
    labels = tuple(r.string(f"class {k} label") for k in range(n_classes))
    count = r.u32("sample count")
    samples = []
    for i in range(count):
        n = r.u32(f"sample {i} label count")
        label = struct.unpack(f"<{n}I", r.take(4 * n, f"sample {i} labels"))
        if any(k >= n_classes for k in label):
            raise BankValidationError(f"{what}: sample {i} label index out of range")
        M = r.u32(f"sample {i} segment count")
        signal = r.floats(C * S * M, f"sample {i} signal").reshape(C, S * M).astype(np.float64)
        samples.append(SyntheticSample(signal=signal, label=tuple(label), seed=0))
    r.finish()
    return labels, S, samples


def save_samples(samples, labels, segment_length, path):
    with open(path, "wb") as fh:
        fh.write(samples_to_bytes(samples, labels, segment_length))


def load_samples(path):
    with open(path, "rb") as fh:
        return samples_from_bytes(fh.read(), what=str(path))
