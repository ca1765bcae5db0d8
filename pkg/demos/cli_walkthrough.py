"""
Command line walkthrough
========================

Drives the ``eegctc`` command through generate -> train -> eval -> decode
in a scratch directory.  The same steps from a shell::

    eegctc generate --config cfg.json --samples-out test.eegs --count 5
    eegctc train --config cfg.json --out run
    eegctc eval run/checkpoint.ckpt --data test.eegs
    eegctc decode run/checkpoint.ckpt test.eegs
"""

import json
import tempfile
from pathlib import Path

from eegctc.cli import main

with tempfile.TemporaryDirectory() as tmp:
    tmp = Path(tmp)
    cfg = tmp / "cfg.json"
    # a small, fast configuration; any key can also be overridden with --key value
    cfg.write_text(json.dumps({"iterations": 40, "batch_size": 16, "eval_interval": 20, "test_size": 16,
                               "dtype": "float32"}))

    def run(*argv):
        print("$ eegctc", " ".join(map(str, argv)))
        code = main([str(a) for a in argv])
        print(f"(exit {code})\n")

    run("generate", "--config", cfg, "--bank-out", tmp / "bank.eegb", "--samples-out", tmp / "test.eegs", "--count", 5)
    run("train", "--config", cfg, "--out", tmp / "run", "--seed", 3)
    run("eval", tmp / "run" / "checkpoint.ckpt", "--data", tmp / "test.eegs")
    run("decode", tmp / "run" / "checkpoint.ckpt", tmp / "test.eegs")
    run("eval", tmp / "missing.ckpt")  # usage error: exit 1
