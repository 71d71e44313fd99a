import json
import subprocess
import sys

import numpy as np
import pytest

from erpgeom import classifier as clf
from erpgeom import fileformats as ff
from erpgeom import spd
from erpgeom.cli import main
from erpgeom.erp_cov import Label, super_covariances
from erpgeom.evaluation import SynthConfig, auc, generate_session


@pytest.fixture(scope="module")
def work(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    assert main(["synth", "-o", str(d / "train.erpa"), "--seed", "1", "--n-repetitions", "20"]) == 0
    assert main(["synth", "-o", str(d / "test.erpa"), "--seed", "2", "--n-repetitions", "10"]) == 0
    assert main(["train", str(d / "train.erpa"), "-o", str(d / "model.erpm")]) == 0
    return d


def read_jsonl(path):
    return [json.loads(line) for line in path.read_text().splitlines()]


def test_synth_matches_library(work):
    trials, meta = ff.read_archive(work / "train.erpa")
    ref = generate_session(SynthConfig(n_repetitions=20, seed=1))
    assert meta["samples"] == 128 and len(trials) == 240
    assert all(a.data.tobytes() == b.data.tobytes() and a.label == b.label for a, b in zip(trials, ref))


def test_synth_seed_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("ERPGEOM_SEED", "5")
    assert main(["synth", "-o", str(tmp_path / "a.erpa"), "--n_repetitions", "1"]) == 0
    trials, _ = ff.read_archive(tmp_path / "a.erpa")
    ref = generate_session(SynthConfig(n_repetitions=1, seed=5))
    assert trials[0].data.tobytes() == ref[0].data.tobytes()


def test_synth_invalid_config(tmp_path):
    assert main(["synth", "-o", str(tmp_path / "a.erpa"), "--erp-latency-ms", "990"]) == 6
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("no_such_key = 3\n")
    assert main(["synth", "-o", str(tmp_path / "a.erpa"), "--config", str(cfg)]) == 6
    assert main(["synth", "-o", str(tmp_path / "a.erpa"), "--channels", "eight"]) == 6


def test_train_deterministic_bytes(work, capsys):
    assert main(["train", str(work / "train.erpa"), "-o", str(work / "again.erpm")]) == 0
    out = capsys.readouterr().out
    assert "target trials: 40" in out and "nontarget trials: 200" in out and "iterations" in out
    assert (work / "again.erpm").read_bytes() == (work / "model.erpm").read_bytes()


def test_train_config_file_and_flag_override(work, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# shrinkage for everyone\nshrinkage = 0.2\n")
    assert main(["train", str(work / "train.erpa"), "-o", str(tmp_path / "a.erpm"), "--config", str(cfg)]) == 0
    assert ff.read_model(tmp_path / "a.erpm")[0].estimator.shrinkage == 0.2
    args = ["train", str(work / "train.erpa"), "-o", str(tmp_path / "b.erpm"), "--config", str(cfg), "--shrinkage", "0.05"]
    assert main(args) == 0
    assert ff.read_model(tmp_path / "b.erpm")[0].estimator.shrinkage == 0.05


def test_train_single_class_exit_3(work, tmp_path):
    trials, _ = ff.read_archive(work / "train.erpa")
    ff.write_archive(tmp_path / "t.erpa", [t for t in trials if t.label == Label.TARGET])
    assert main(["train", str(tmp_path / "t.erpa"), "-o", str(tmp_path / "m.erpm")]) == 3


def test_train_convergence_failure_exit_1(work, tmp_path):
    args = ["train", str(work / "train.erpa"), "-o", str(tmp_path / "m.erpm"), "--mean-max-iter", "1"]
    assert main(args) == 1


def test_score_table(work):
    out = work / "scores.tsv"
    assert main(["score", str(work / "model.erpm"), str(work / "train.erpa"), "-o", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "trial_id\tscore\tpredicted"
    trials, _ = ff.read_archive(work / "train.erpa")
    rows = [line.split("\t") for line in lines[1:]]
    assert [int(r[0]) for r in rows] == [t.trial_id for t in trials]
    agree = np.mean([(r[2] == "target") == (t.label == Label.TARGET) for r, t in zip(rows, trials)])
    assert agree >= 0.9


def test_score_empty_archive_header_only(work, tmp_path, capsys):
    ff.write_archive(tmp_path / "e.erpa", [], sample_rate=128.0, shape=(8, 128))
    assert main(["score", str(work / "model.erpm"), str(tmp_path / "e.erpa")]) == 0
    assert capsys.readouterr().out == "trial_id\tscore\tpredicted\n"


def test_score_dimension_mismatch_exit_4(work, tmp_path):
    main(["synth", "-o", str(tmp_path / "c4.erpa"), "--channels", "4", "--n-repetitions", "1"])
    assert main(["score", str(work / "model.erpm"), str(tmp_path / "c4.erpa")]) == 4


def test_corrupt_inputs_exit_2(work, tmp_path, capsys):
    bad = tmp_path / "bad.erpa"
    bad.write_bytes(b"NOPE!" + (work / "train.erpa").read_bytes()[5:])
    assert main(["train", str(bad), "-o", str(tmp_path / "m.erpm")]) == 2
    assert "bad magic" in capsys.readouterr().err
    assert main(["score", str(tmp_path / "missing.erpm"), str(work / "train.erpa")]) == 2


def test_evaluate_auc_passthrough(work):
    out = work / "auc.jsonl"
    assert main(["evaluate", "auc", str(work / "test.erpa"), "--model", str(work / "model.erpm"), "-o", str(out)]) == 0
    model, _ = ff.read_model(work / "model.erpm")
    trials, _ = ff.read_archive(work / "test.erpa")
    expected = auc(clf.score_many(model, trials), [t.label for t in trials])
    assert read_jsonl(out)[0]["mean"] == expected


def test_evaluate_auc_canonical_split(tmp_path):
    out = tmp_path / "auc.jsonl"
    assert main(["synth", "-o", str(tmp_path / "s.erpa"), "--seed", "4", "--n-repetitions", "100"]) == 0
    assert main(["evaluate", "auc", str(tmp_path / "s.erpa"), "-o", str(out)]) == 0
    assert read_jsonl(out)[0]["mean"] >= 0.95


def test_evaluate_learning_curve(work):
    out = work / "lc.jsonl"
    args = ["evaluate", "learning-curve", str(work / "train.erpa"), "--learning-sizes", "1,5,10", "-o", str(out)]
    assert main(args) == 0
    assert [r["x"] for r in read_jsonl(out)] == [1.0, 5.0, 10.0]
    args[-3] = "1,11"
    assert main(args) == 6


def test_evaluate_cross_subject(work):
    out = work / "xs.jsonl"
    assert main(["evaluate", "cross-subject", str(work / "train.erpa"), str(work / "test.erpa"), "-o", str(out)]) == 0
    assert len(read_jsonl(out)) == 2
    assert main(["evaluate", "cross-subject", str(work / "train.erpa")]) == 6


def test_evaluate_unknown_protocol_exit_5(work, capsys):
    assert main(["evaluate", "bogus", str(work / "train.erpa")]) == 5
    err = capsys.readouterr().err
    assert "latency-sweep" in err and "cross-subject" in err


@pytest.fixture(scope="module")
def raw512(tmp_path_factory):
    d = tmp_path_factory.mktemp("raw")
    args = [
        "synth", "-o", str(d / "s.erpa"), "--sample-rate", "512", "--n-repetitions", "20", "--seed", "3",
        "--recording-out", str(d / "rec.erpr"), "--triggers-out", str(d / "trig.txt"),
    ]
    assert main(args) == 0
    return d


def test_preprocess_512_to_128(raw512, capsys):
    out = raw512 / "p.erpa"
    assert main(["preprocess", str(raw512 / "rec.erpr"), str(raw512 / "trig.txt"), "-o", str(out)]) == 0
    text = capsys.readouterr().out
    assert "trials: 240 (target 40, nontarget 200)" in text and "dropped triggers: 0" in text
    trials, meta = ff.read_archive(out)
    assert meta == {"channels": 8, "samples": 128, "sample_rate": 128.0}


def test_preprocess_empty_triggers(raw512, tmp_path):
    (tmp_path / "none.txt").write_text("# nothing\n")
    out = tmp_path / "p.erpa"
    assert main(["preprocess", str(raw512 / "rec.erpr"), str(tmp_path / "none.txt"), "-o", str(out)]) == 0
    trials, meta = ff.read_archive(out)
    assert trials == [] and meta["samples"] == 128


def test_preprocess_bad_inputs(raw512, tmp_path, capsys):
    (tmp_path / "bad.txt").write_text("10 target\n5 nontarget\n")
    assert main(["preprocess", str(raw512 / "rec.erpr"), str(tmp_path / "bad.txt"), "-o", str(tmp_path / "p")]) == 2
    assert "trigger #2" in capsys.readouterr().err
    (tmp_path / "rec.erpr").write_bytes(b"ERPR1\x07\x00" + b"\0" * 40)
    assert main(["preprocess", str(tmp_path / "rec.erpr"), str(raw512 / "trig.txt"), "-o", str(tmp_path / "p")]) == 2
    args = ["preprocess", str(raw512 / "rec.erpr"), str(raw512 / "trig.txt"), "-o", str(tmp_path / "p"), "--target-hz", "100"]
    assert main(args) == 6


def test_latency_sweep_emits_11_points(raw512):
    out = raw512 / "lat.jsonl"
    args = ["evaluate", "latency-sweep", "--recording", str(raw512 / "rec.erpr"), "--triggers", str(raw512 / "trig.txt"), "-o", str(out)]
    assert main(args) == 0
    recs = read_jsonl(out)
    assert [r["x"] for r in recs] == [float(x) for x in range(-55, 56, 11)]
    assert recs[5]["mean"] == 1.0
    assert main(["evaluate", "jitter-sweep"]) == 6


def replay(work, tmp_path, *extra):
    out, rep = tmp_path / "final.erpm", tmp_path / "rep.jsonl"
    args = ["adapt-replay", str(work / "model.erpm"), str(work / "test.erpa"), "-o", str(out), "--report", str(rep), *extra]
    assert main(args) == 0
    return out, rep


def test_replay_fixed_zero_keeps_generic(work, tmp_path):
    out, rep = replay(work, tmp_path, "--schedule", "fixed", "--alpha", "0")
    generic, _ = ff.read_model(work / "model.erpm")
    final, meta = ff.read_model(out)
    assert meta["schedule"] == clf.Schedule.FIXED
    hdr = ff._MODEL_HEADER.size
    assert out.read_bytes()[hdr:] == (work / "model.erpm").read_bytes()[hdr:]
    assert len(read_jsonl(rep)) == 4


def test_replay_fixed_one_equals_batch_means(work, tmp_path):
    out, _ = replay(work, tmp_path, "--schedule", "fixed", "--alpha", "1")
    final, _ = ff.read_model(out)
    generic, _ = ff.read_model(work / "model.erpm")
    trials, _ = ff.read_archive(work / "test.erpa")
    for label, mean in ((Label.TARGET, final.mean_target), (Label.NONTARGET, final.mean_nontarget)):
        covs = super_covariances(generic.prototype, [t for t in trials if t.label == label], generic.estimator)
        assert spd.riemannian_distance(mean, spd.frechet_mean(covs)) < 1e-6


def test_replay_deterministic(work, tmp_path):
    (tmp_path / "a").mkdir()
    (tmp_path / "b").mkdir()
    a = replay(work, tmp_path / "a")
    b = replay(work, tmp_path / "b")
    assert a[0].read_bytes() == b[0].read_bytes()
    assert a[1].read_text() == b[1].read_text()


def test_help_documents_flags():
    res = subprocess.run([sys.executable, "-m", "erpgeom", "train", "--help"], capture_output=True, text=True)
    assert res.returncode == 0
    for flag in ("--low-hz", "--mean-max-iter", "--shrinkage", "--schedule", "--n-full", "--seed", "--config"):
        assert flag in res.stdout
