"""Command-line entry point: generate, train, eval, decode.

Configuration is a JSON file shaped like ``TrainConfig.to_dict()``; any key
can be overridden with ``--key value`` (nested keys as ``--synth.noise_std``,
or by their bare name when unambiguous).  Values are parsed as JSON when
possible, otherwise kept as strings.

Exit status: 0 success, 1 usage error, 2 runtime error.
"""

import argparse
import json
import logging
import sys
from pathlib import Path

from . import synth, train
from .ctc import Alphabet
from .tensor import ConfigError

log = logging.getLogger("eegctc")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def __init__(self, *args, **kwargs):
        kwargs.setdefault("allow_abbrev", False)  # config overrides must not prefix-match options
        super().__init__(*args, **kwargs)

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _parse_value(raw):
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_overrides(cfg_dict, extra):
    """Apply ``--key value`` pairs to a nested config dict (in place)."""
    defaults = train.TrainConfig().to_dict()
    leaf_paths = {}
    for k, v in defaults.items():
        if isinstance(v, dict):
            for sub in v:
                leaf_paths.setdefault(sub, []).append((k, sub))
        else:
            leaf_paths.setdefault(k, []).append((k,))
    i = 0
    while i < len(extra):
        flag = extra[i]
        if not flag.startswith("--"):
            raise UsageError(f"unexpected argument {flag!r}")
        key = flag[2:]
        if "=" in key:
            key, raw = key.split("=", 1)
            i += 1
        else:
            if i + 1 >= len(extra):
                raise UsageError(f"flag {flag} needs a value")
            raw = extra[i + 1]
            i += 2
        key = key.replace("-", "_")
        if "." in key:
            path = tuple(key.split("."))
            if len(path) != 2 or path[0] not in defaults or path[1] not in defaults[path[0]]:
                raise UsageError(f"unknown config key {key!r}")
        else:
            paths = leaf_paths.get(key)
            if not paths:
                raise UsageError(f"unknown config key {key!r}")
            if len(paths) > 1:
                raise UsageError(f"ambiguous key {key!r}; use one of {['.'.join(p) for p in paths]}")
            path = paths[0]
        target = cfg_dict
        for part in path[:-1]:
            target = target.setdefault(part, {})
        target[path[-1]] = _parse_value(raw)
    return cfg_dict


def load_config(path, extra):
    cfg_dict = {}
    if path is not None:
        try:
            cfg_dict = json.loads(Path(path).read_text())
        except FileNotFoundError:
            raise UsageError(f"config file not found: {path}") from None
        except json.JSONDecodeError as e:
            raise UsageError(f"malformed config {path}: {e}") from None
        if not isinstance(cfg_dict, dict):
            raise UsageError(f"config {path} must hold a JSON object")
    apply_overrides(cfg_dict, extra)
    try:
        return train.TrainConfig.from_dict(cfg_dict)
    except (ConfigError, TypeError) as e:
        raise UsageError(f"invalid config: {e}") from None


def _require_file(path):
    if not Path(path).is_file():
        raise UsageError(f"file not found: {path}")


def cmd_generate(args, extra):
    cfg = load_config(args.config, extra)
    bank = train.build_bank(cfg)
    if args.bank_out:
        synth.save_bank(bank, args.bank_out)
        print(f"wrote bank {args.bank_out}: {len(bank.labels)} classes x {bank.counts} segments")
    if args.samples_out:
        stream = {"test": train.TEST_STREAM, "train": train.TRAIN_STREAM}[args.stream]
        samples = synth.synth_dataset(cfg.synth, bank, cfg.seed, args.count, stream=stream)
        synth.save_samples(samples, bank.labels, bank.segment_length, args.samples_out)
        print(f"wrote {len(samples)} samples to {args.samples_out}")
    if not (args.bank_out or args.samples_out):
        raise UsageError("generate needs --bank-out and/or --samples-out")


def cmd_train(args, extra):
    cfg = load_config(args.config, extra)

    def report(m, rep):
        loss = "-" if m.loss is None else f"{m.loss:.4f}"
        print(f"iter {m.iteration:5d}  loss {loss}  test_loss {m.test_loss:.4f}  cled {m.cled:.4f}", flush=True)

    result = train.run_training(cfg, args.out, callback=report)
    print(result.report.listing(result.model.alphabet))
    print(f"checkpoint: {Path(args.out) / 'checkpoint.ckpt'}")


def _load_ckpt(path):
    _require_file(path)
    return train.load_checkpoint(path)


def cmd_eval(args, extra):
    if extra:
        raise UsageError(f"unrecognized arguments: {' '.join(extra)}")
    model, _, cfg, iteration = _load_ckpt(args.checkpoint)
    if args.data:
        _require_file(args.data)
        labels, _, testset = synth.load_samples(args.data)
        if labels != model.cfg.labels:
            raise ConfigError(f"dataset labels {labels} != model labels {model.cfg.labels}")
    else:
        testset = train.make_test_set(cfg, train.build_bank(cfg))
    rep = train.evaluate(model, testset)
    print(f"checkpoint iteration {iteration}, {len(testset)} samples")
    print(f"CLED {rep.cled:.6f}")
    print(f"mean loss {rep.loss:.6f}")
    print(rep.listing(model.alphabet))


def cmd_decode(args, extra):
    if extra:
        raise UsageError(f"unrecognized arguments: {' '.join(extra)}")
    model, _, _, _ = _load_ckpt(args.checkpoint)
    _require_file(args.signal)
    _, _, samples = synth.load_samples(args.signal)
    alphabet = Alphabet(model.cfg.labels)
    for s in samples:
        print(alphabet.decode(model.decode(s.signal)))


def build_parser():
    p = _Parser(prog="eegctc", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    g = sub.add_parser("generate", help="write a segment bank and/or a sample set")
    g.add_argument("--config")
    g.add_argument("--bank-out")
    g.add_argument("--samples-out")
    g.add_argument("--count", type=int, default=20)
    g.add_argument("--stream", choices=("test", "train"), default="test")

    t = sub.add_parser("train", help="train a model, writing checkpoint and metrics")
    t.add_argument("--config")
    t.add_argument("--out", default="run")

    e = sub.add_parser("eval", help="CLED of a checkpoint on a sample set")
    e.add_argument("checkpoint")
    e.add_argument("--data", help="EEGS sample file; default: the config's test set")

    d = sub.add_parser("decode", help="decode every signal in an EEGS file")
    d.add_argument("checkpoint")
    d.add_argument("signal")
    return p


COMMANDS = {"generate": cmd_generate, "train": cmd_train, "eval": cmd_eval, "decode": cmd_decode}


def main(argv=None):
    parser = build_parser()
    try:
        args, extra = parser.parse_known_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
        COMMANDS[args.command](args, extra)
    except UsageError as e:
        print(e, file=sys.stderr)
        return 1
    except (OSError, ValueError, RuntimeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
