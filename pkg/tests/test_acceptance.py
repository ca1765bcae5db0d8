"""End-to-end acceptance checks, one tagged test group per criterion.

Run just these with ``pytest tests/test_acceptance.py -v``; the terminal
summary prints one PASS/FAIL line per criterion.
"""

import itertools
import json
import math
import random
import time

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from eegctc import cli, ctc, eegnet, synth, train
from eegctc.model import Model, ModelConfig
from eegctc.tensor import EVAL, grad_check, make_rng, softmax_rows

C1 = "CTC forward-backward matches brute force within 1e-9 on 200 instances"
C2 = "label probabilities sum to 1 +/- 1e-9 for T <= 4, n <= 4"
C3 = "end-to-end gradient check on C=4, S=50, T=3, H=8: max rel err < 1e-3"
C4 = "C=118, S=50 trace is 20x50 -> 20x50x5 -> 10x10x5 -> 10x10x5 -> 5x2x5"
C5 = "collapse('a_ab_') == collapse('_aa__abb') == 'aab'"
C6 = "default config: CLED(0) > 0.5 and CLED <= 0.05 by iteration 500"
C7 = "first-20 decode listing after convergence has >= 19/20 exact matches"
C8 = "identical train invocations give byte-identical metrics; checkpoint round-trip keeps evaluate bit-identical"
C9 = "edit distance is a metric on 1e4 random triples"


def _random_instance(r):
    T = int(r.integers(1, 7))
    n = int(r.integers(2, 5))
    label = tuple(int(k) for k in r.integers(0, n - 1, size=int(r.integers(0, 4))))
    y = softmax_rows(r.standard_normal((T, n)) * 2)
    return y, label, n - 1


@pytest.mark.criterion(1, C1)
class TestCriterion1:
    def test_200_seeded_instances(self):
        start = time.perf_counter()
        r = make_rng(2024)
        worst = 0.0
        for _ in range(200):
            y, label, blank = _random_instance(r)
            loss, _ = ctc.ctc_loss(y, label, blank)
            worst = max(worst, abs(math.exp(-loss) - ctc.label_prob_bruteforce(y, label, blank)))
        assert worst < 1e-9
        assert time.perf_counter() - start < 10

    @settings(max_examples=200, deadline=None, derandomize=True)
    @given(st.integers(0, 2**63 - 1))
    def test_property(self, seed):
        y, label, blank = _random_instance(make_rng(seed))
        loss, _ = ctc.ctc_loss(y, label, blank)
        assert abs(math.exp(-loss) - ctc.label_prob_bruteforce(y, label, blank)) < 1e-9


@pytest.mark.criterion(2, C2)
def test_criterion2_partition():
    start = time.perf_counter()
    r = make_rng(7)
    for T in range(1, 5):
        for n in range(2, 5):
            y = softmax_rows(r.standard_normal((T, n)) * 2)
            total = sum(
                ctc.label_prob_bruteforce(y, label, n - 1)
                for length in range(T + 1)
                for label in itertools.product(range(n - 1), repeat=length)
            )
            assert abs(total - 1.0) < 1e-9, (T, n)
    assert time.perf_counter() - start < 5


@pytest.mark.criterion(3, C3)
def test_criterion3_gradient():
    start = time.perf_counter()
    cfg = ModelConfig(channels=4, segment_length=50, hidden=8, dropout=0.0)
    model = Model.init(cfg, make_rng(11))
    r = make_rng(12)
    # deterministic batch norm: fixed, non-trivial running statistics
    for st_ in model.state.values():
        st_["mean"] = r.standard_normal(st_["mean"].shape) * 0.1
        st_["var"] = r.uniform(0.5, 2.0, st_["var"].shape)
    signal = r.standard_normal((4, 3 * 50))  # T = 3 segments
    label = (0, 1)

    def f():
        loss, grads, _ = model.loss_and_grads([signal], [label], mode=EVAL)
        return loss, grads

    err = grad_check(f, model.params, h=1e-5)
    assert err < 1e-3
    assert time.perf_counter() - start < 120


@pytest.mark.criterion(4, C4)
def test_criterion4_table_shapes():
    start = time.perf_counter()
    r = make_rng(0)
    params = eegnet.init_eegnet_params(118, r)
    feats, cache = eegnet.eegnet_forward(
        r.standard_normal((1, 118, 50)), params, eegnet.init_eegnet_state(), EVAL
    )
    assert [tuple(s) for s in cache["trace"]] == [(20, 50), (20, 50, 5), (10, 10, 5), (10, 10, 5), (5, 2, 5)]
    assert feats.shape == (1, 50)
    assert time.perf_counter() - start < 1


@pytest.mark.criterion(5, C5)
def test_criterion5_collapse():
    ab = ctc.Alphabet(("a", "b"))
    p1 = ab.encode(list("a_ab_"))
    p2 = ab.encode(list("_aa__abb"))
    assert ctc.collapse(p1, ab.blank) == ctc.collapse(p2, ab.blank) == ab.encode("a a b")


@pytest.fixture(scope="session")
def converged(tmp_path_factory):
    out = tmp_path_factory.mktemp("default_run")
    cfg = train.TrainConfig(iterations=500, eval_interval=100, target_cled=0.05, min_iterations=200)
    start = time.perf_counter()
    result = train.run_training(cfg, out)
    elapsed = time.perf_counter() - start
    for m in result.metrics:
        print(f"iteration {m.iteration}: loss {m.loss} test_loss {m.test_loss:.4f} cled {m.cled:.4f}")
    print(f"training took {elapsed:.0f} s")
    return cfg, result, out, elapsed


@pytest.mark.slow
@pytest.mark.criterion(6, C6)
class TestCriterion6:
    def test_initial_cled_high(self, converged):
        _, result, _, _ = converged
        assert result.metrics[0].iteration == 0
        assert result.metrics[0].cled > 0.5

    def test_converges_by_500(self, converged):
        _, result, _, elapsed = converged
        reached = [m.iteration for m in result.metrics if m.cled <= 0.05]
        assert reached and reached[0] <= 500
        assert elapsed < 30 * 60

    def test_loss_decreases_in_the_large(self, converged):
        _, result, _, _ = converged
        losses = np.array(result.losses)
        assert len(losses) >= 200
        assert losses[150:200].mean() < losses[0:50].mean()


@pytest.mark.slow
@pytest.mark.criterion(7, C7)
class TestCriterion7:
    def test_listing(self, converged):
        _, result, _, _ = converged
        pairs = result.report.pairs
        assert len(pairs) == 20
        print(result.report.listing(result.model.alphabet))
        assert sum(d == t for d, t in pairs) >= 19

    def test_cli_decodes_a_u_rest(self, converged, tmp_path, capsys):
        cfg, _, out, _ = converged
        bank = train.build_bank(cfg)
        r = make_rng(99)
        extended = synth.extend_labels((0, 1, 2), cfg.synth, r)
        signal = synth.assemble_signal(extended, bank, cfg.synth, r)
        sample = synth.SyntheticSample(signal=signal, label=(0, 1, 2), seed=0)
        path = tmp_path / "one.eegs"
        synth.save_samples([sample], cfg.model.labels, cfg.synth.segment_length, path)
        assert cli.main(["decode", str(out / "checkpoint.ckpt"), str(path)]) == 0
        assert capsys.readouterr().out.strip() == "a u rest"


SMALL = {
    "iterations": 6,
    "batch_size": 8,
    "eval_interval": 3,
    "test_size": 8,
    "model": {"channels": 4, "hidden": 16},
    "synth": {"channels": 4},
}


@pytest.mark.criterion(8, C8)
class TestCriterion8:
    def test_cli_metrics_byte_identical(self, tmp_path, capsys):
        cfg_a, cfg_b = tmp_path / "a.json", tmp_path / "b.json"
        cfg_a.write_text(json.dumps(SMALL))
        cfg_b.write_text(json.dumps(SMALL))
        for cfg_path, name in ((cfg_a, "run_a"), (cfg_b, "run_b")):
            assert cli.main(["train", "--config", str(cfg_path), "--out", str(tmp_path / name)]) == 0
        capsys.readouterr()
        a = (tmp_path / "run_a" / "metrics.jsonl").read_bytes()
        b = (tmp_path / "run_b" / "metrics.jsonl").read_bytes()
        assert a and a == b

    def test_checkpoint_round_trip(self, tmp_path):
        cfg = train.TrainConfig.from_dict(SMALL)
        result = train.run_training(cfg, tmp_path)
        model, opt, cfg2, iteration = train.load_checkpoint(tmp_path / "checkpoint.ckpt")
        testset = train.make_test_set(cfg2, train.build_bank(cfg2))
        before = train.evaluate(result.model, testset)
        after = train.evaluate(model, testset)
        assert (before.cled, before.loss, before.pairs) == (after.cled, after.loss, after.pairs)
        again = train.checkpoint_bytes(model, opt, cfg2, iteration)
        assert again == (tmp_path / "checkpoint.ckpt").read_bytes()


@pytest.mark.criterion(9, C9)
def test_criterion9_metric_axioms():
    start = time.perf_counter()
    r = random.Random(9)

    def seq():
        return tuple(r.randrange(3) for _ in range(r.randrange(9)))

    ed = train.edit_distance
    for _ in range(10_000):
        a, b, c = seq(), seq(), seq()
        dab = ed(a, b)
        assert dab >= 0
        assert dab == ed(b, a)
        assert (dab == 0) == (a == b)
        assert ed(a, c) <= dab + ed(b, c)
    assert time.perf_counter() - start < 5
