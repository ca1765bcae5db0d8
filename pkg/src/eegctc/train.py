"""Training loop, Adam, evaluation by normalised edit distance, checkpoints."""

import json
import logging
import struct
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .ctc import ctc_log_likelihood, greedy_decode
from .model import Model, ModelConfig
from .synth import SynthConfig, load_bank, make_surrogate_bank, synth_dataset
from .tensor import TRAIN, ConfigError, derive_seed, make_rng

log = logging.getLogger(__name__)

# independent random streams derived from the master seed
BANK_STREAM, TEST_STREAM, TRAIN_STREAM, INIT_STREAM, DROPOUT_STREAM = range(5)

CKPT_MAGIC = b"CKPT"
CKPT_VERSION = 1
LISTING_SIZE = 20


class CheckpointError(ValueError):
    pass


@dataclass
class TrainConfig:
    iterations: int = 200
    batch_size: int = 128
    eval_interval: int = 100
    test_size: int = 64
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    dtype: str = "float64"
    bank: str = None  # path to an EEGB file; None -> surrogate bank
    target_cled: float = None  # stop after the first evaluation at or below this
    min_iterations: int = 0  # ... but never before this many iterations
    model: ModelConfig = field(default_factory=ModelConfig)
    synth: SynthConfig = field(default_factory=SynthConfig)

    def __post_init__(self):
        if isinstance(self.model, dict):
            self.model = ModelConfig(**self.model)
        if isinstance(self.synth, dict):
            self.synth = SynthConfig(**self.synth)
        if self.batch_size < 1 or self.eval_interval < 1:
            raise ConfigError("batch_size and eval_interval must be >= 1")
        if self.iterations < 0 or self.test_size < 1:
            raise ConfigError("iterations must be >= 0 and test_size >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ConfigError(f"dtype must be float32 or float64, got {self.dtype!r}")
        if self.synth.classes != len(self.model.labels):
            raise ConfigError(
                f"synth.classes={self.synth.classes} but model has {len(self.model.labels)} labels"
            )
        if (self.synth.channels, self.synth.segment_length) != (
            self.model.channels, self.model.segment_length
        ):
            raise ConfigError("synth and model disagree on channels / segment_length")

    @classmethod
    def from_dict(cls, d):
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def to_dict(self):
        d = {k: v for k, v in asdict(self).items() if k not in ("model", "synth")}
        d["model"] = self.model.to_dict()
        d["synth"] = self.synth.to_dict()
        return d


@dataclass
class Metrics:
    iteration: int
    loss: float  # mean train loss since the previous evaluation; None at iteration 0
    test_loss: float
    cled: float
    skipped: int
    seconds: float

    def log_line(self):
        """JSON line without wall-clock time, so identical runs give identical logs."""
        d = asdict(self)
        del d["seconds"]
        return json.dumps(d, sort_keys=True)


@dataclass
class EvalReport:
    cled: float
    loss: float
    pairs: list  # (decoded, truth) label-index tuples, first LISTING_SIZE samples

    def listing(self, alphabet):
        lines = []
        for i, (dec, truth) in enumerate(self.pairs):
            mark = "ok" if dec == truth else "XX"
            lines.append(f"{i:2d} {mark}  decoded: {alphabet.decode(dec) or '-'}  |  true: {alphabet.decode(truth)}")
        return "\n".join(lines)


class Adam:
    def __init__(self, params, lr=1e-3, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        lr_t = self.lr * np.sqrt(1 - b2**self.t) / (1 - b1**self.t)
        for k, p in params.items():
            g = grads[k].astype(p.dtype, copy=False)
            self.m[k] *= b1
            self.m[k] += (1 - b1) * g
            self.v[k] *= b2
            self.v[k] += (1 - b2) * g * g
            p -= (lr_t * self.m[k] / (np.sqrt(self.v[k]) + self.eps)).astype(p.dtype, copy=False)


def edit_distance(a, b):
    """Levenshtein distance with unit insert / delete / substitute costs."""
    a, b = list(a), list(b)
    prev = list(range(len(b) + 1))
    for i, x in enumerate(a, 1):
        cur = [i]
        for j, y in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (x != y)))
        prev = cur
    return prev[-1]


def evaluate(model, testset):
    """Mean of ED(decoded, truth) / |truth| over the test set, in eval mode."""
    if not testset:
        raise ValueError("empty test set")
    blank = model.alphabet.blank
    scores, losses, pairs = [], [], []
    for sample in testset:
        if len(sample.label) == 0:
            raise ValueError("test labels must be non-empty")
        logy = model.log_posteriors(sample.signal)
        dec = greedy_decode(logy, blank)
        scores.append(edit_distance(dec, sample.label) / len(sample.label))
        losses.append(-ctc_log_likelihood(logy, sample.label, blank))
        if len(pairs) < LISTING_SIZE:
            pairs.append((dec, tuple(sample.label)))
    # sort before summing so the result does not depend on test-set order
    return EvalReport(float(np.sum(np.sort(scores)) / len(scores)),
                      float(np.sum(np.sort(losses)) / len(losses)), pairs)


def train_step(model, opt, batch, rng=None):
    """One Adam update on the mean CTC loss of ``batch``; returns (loss, skipped)."""
    loss, grads, skipped = model.loss_and_grads(
        [s.signal for s in batch], [s.label for s in batch], rng, mode=TRAIN
    )
    opt.step(model.params, grads)
    return loss, skipped


def build_bank(cfg):
    if cfg.bank:
        bank = load_bank(cfg.bank)
        if bank.labels != cfg.model.labels:
            raise ConfigError(f"bank labels {bank.labels} != model labels {cfg.model.labels}")
        return bank
    rng = make_rng(derive_seed(cfg.seed, BANK_STREAM))
    return make_surrogate_bank(cfg.synth, rng, labels=cfg.model.labels)


def build_model(cfg):
    return Model.init(cfg.model, make_rng(derive_seed(cfg.seed, INIT_STREAM)), np.dtype(cfg.dtype))


def make_test_set(cfg, bank):
    return synth_dataset(cfg.synth, bank, cfg.seed, cfg.test_size, stream=TEST_STREAM)


def training_batch(cfg, bank, iteration):
    return synth_dataset(
        cfg.synth, bank, cfg.seed, cfg.batch_size, stream=TRAIN_STREAM,
        start=iteration * cfg.batch_size,
    )


@dataclass
class TrainResult:
    model: Model
    optimizer: Adam
    metrics: list  # Metrics per evaluation
    report: EvalReport  # from the last evaluation
    losses: list  # mean batch loss per iteration
    iteration: int


def run_training(cfg, out_dir=None, callback=None):
    """Train from scratch on freshly generated batches.

    The test set is generated once up front; evaluation runs at iteration 0,
    every ``eval_interval`` iterations and after the last one.  With
    ``out_dir`` set, ``metrics.jsonl``, ``timing.jsonl`` and
    ``checkpoint.ckpt`` are (re)written at every evaluation.
    """
    bank = build_bank(cfg)
    testset = make_test_set(cfg, bank)
    model = build_model(cfg)
    opt = Adam(model.params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    result = TrainResult(model, opt, [], None, [], 0)
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name in ("metrics.jsonl", "timing.jsonl"):
            (out_dir / name).write_text("")

    start = time.perf_counter()
    skipped = 0

    def record(iteration):
        nonlocal skipped
        report = evaluate(model, testset)
        window = result.losses[result.iteration:iteration]
        m = Metrics(
            iteration=iteration,
            loss=float(np.mean(window)) if window else None,
            test_loss=report.loss,
            cled=report.cled,
            skipped=skipped,
            seconds=time.perf_counter() - start,
        )
        result.metrics.append(m)
        result.report = report
        result.iteration = iteration
        skipped = 0
        log.info("iter %d loss %s test_loss %.3f cled %.3f", iteration, m.loss, m.test_loss, m.cled)
        if out_dir is not None:
            with open(out_dir / "metrics.jsonl", "a") as fh:
                fh.write(m.log_line() + "\n")
            with open(out_dir / "timing.jsonl", "a") as fh:
                fh.write(json.dumps({"iteration": iteration, "seconds": m.seconds}) + "\n")
            save_checkpoint(out_dir / "checkpoint.ckpt", model, opt, cfg, iteration)
        if callback is not None:
            callback(m, report)
        return (
            cfg.target_cled is not None
            and m.cled <= cfg.target_cled
            and iteration >= cfg.min_iterations
        )

    if record(0):
        return result
    for it in range(cfg.iterations):
        batch = training_batch(cfg, bank, it)
        rng = make_rng(derive_seed(cfg.seed, DROPOUT_STREAM, it))
        loss, n_skip = train_step(model, opt, batch, rng)
        result.losses.append(loss)
        skipped += n_skip
        done = it + 1
        if done % cfg.eval_interval == 0 or done == cfg.iterations:
            if record(done):
                break
    return result


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------
# layout: magic, u32 version, u64 iteration, u64 adam step, u32 json length,
# config json, u32 tensor count, then per tensor: u32 name length, name,
# u32 ndim, u32 dims..., float64 data (little-endian, row-major).

def _checkpoint_tensors(model, opt):
    tensors = {f"param.{k}": v for k, v in model.params.items()}
    for layer, st in model.state.items():
        for k, v in st.items():
            tensors[f"state.{layer}.{k}"] = v
    if opt is not None:
        tensors.update({f"adam.m.{k}": v for k, v in opt.m.items()})
        tensors.update({f"adam.v.{k}": v for k, v in opt.v.items()})
    return tensors


def checkpoint_bytes(model, opt, cfg, iteration):
    blob = json.dumps(cfg.to_dict(), sort_keys=True).encode("utf-8")
    tensors = _checkpoint_tensors(model, opt)
    out = [CKPT_MAGIC, struct.pack("<IQQI", CKPT_VERSION, iteration, opt.t if opt else 0, len(blob)), blob]
    out.append(struct.pack("<I", len(tensors)))
    for name in sorted(tensors):
        arr = np.asarray(tensors[name])
        nb = name.encode("utf-8")
        out.append(struct.pack(f"<I{len(nb)}sI{arr.ndim}I", len(nb), nb, arr.ndim, *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype="<f8").tobytes())
    return b"".join(out)


def save_checkpoint(path, model, opt, cfg, iteration):
    data = checkpoint_bytes(model, opt, cfg, iteration)
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(data)
    tmp.replace(path)


def checkpoint_from_bytes(data, what="checkpoint"):
    """Returns (model, optimizer, cfg, iteration)."""
    pos = 0

    def take(n, field_name):
        nonlocal pos
        if pos + n > len(data):
            raise CheckpointError(
                f"{what}: truncated reading {field_name}: need {pos + n} bytes, have {len(data)}"
            )
        chunk = data[pos:pos + n]
        pos += n
        return chunk

    if take(4, "magic") != CKPT_MAGIC:
        raise CheckpointError(f"{what}: not a checkpoint (bad magic)")
    version, iteration, adam_t, blob_len = struct.unpack("<IQQI", take(24, "header"))
    if version != CKPT_VERSION:
        raise CheckpointError(f"{what}: unsupported version {version}")
    cfg = TrainConfig.from_dict(json.loads(take(blob_len, "config").decode("utf-8")))
    (count,) = struct.unpack("<I", take(4, "tensor count"))
    tensors = {}
    for _ in range(count):
        (nlen,) = struct.unpack("<I", take(4, "name length"))
        name = take(nlen, "name").decode("utf-8")
        (ndim,) = struct.unpack("<I", take(4, f"{name} rank"))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim, f"{name} shape"))
        size = int(np.prod(shape)) if shape else 1
        tensors[name] = np.frombuffer(take(8 * size, name), dtype="<f8").reshape(shape)
    if pos != len(data):
        raise CheckpointError(f"{what}: {len(data) - pos} trailing bytes")

    dtype = np.dtype(cfg.dtype)
    model = build_model(cfg)

    def pop(name, like):
        if name not in tensors:
            raise CheckpointError(f"{what}: missing tensor {name}")
        arr = tensors.pop(name)
        if arr.shape != like.shape:
            raise CheckpointError(f"{what}: {name} has shape {arr.shape}, expected {like.shape}")
        return arr.astype(dtype)

    for k in model.params:
        model.params[k] = pop(f"param.{k}", model.params[k])
    for layer, st in model.state.items():
        for k in st:
            st[k] = pop(f"state.{layer}.{k}", st[k])
    opt = Adam(model.params, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_eps)
    opt.t = adam_t
    for k in model.params:
        if f"adam.m.{k}" in tensors:
            opt.m[k] = pop(f"adam.m.{k}", opt.m[k])
            opt.v[k] = pop(f"adam.v.{k}", opt.v[k])
    if tensors:
        raise CheckpointError(f"{what}: unexpected tensors {sorted(tensors)}")
    return model, opt, cfg, iteration


def load_checkpoint(path):
    return checkpoint_from_bytes(Path(path).read_bytes(), what=str(path))
