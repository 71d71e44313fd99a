import io
import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from erpgeom import classifier as clf
from erpgeom.erp_cov import Label
from erpgeom.evaluation import (
    CurvePoint,
    EvaluationReport,
    SynthConfig,
    adaptive_replay,
    auc,
    canonical_auc,
    cross_subject_eval,
    generate_recording,
    generate_session,
    learning_curve,
    random_mixing,
    robustness_sweep,
    split_recording,
)
from erpgeom.exceptions import ClassCoverageError, ConfigError


def brute_auc(scores, labels):
    pos = [s for s, lab in zip(scores, labels) if lab == 1]
    neg = [s for s, lab in zip(scores, labels) if lab == 0]
    total = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return total / (len(pos) * len(neg))


# --- AUC ----------------------------------------------------------------------


def test_auc_examples():
    assert auc([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
    assert auc([0.1, 0.2, 0.8, 0.9], [1, 1, 0, 0]) == 0.0
    assert auc([3.0] * 6, [0, 1, 0, 1, 0, 0]) == 0.5
    assert auc([1.0, 2.0, 2.0, 3.0], [0, 0, 1, 1]) == pytest.approx(0.875)


def test_auc_matches_brute_force_with_ties():
    rng = np.random.default_rng(4)
    scores = np.round(rng.standard_normal(200), 1)
    labels = rng.integers(0, 2, 200)
    assert abs(auc(scores, labels) - brute_auc(scores, labels)) < 1e-12


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.integers(-5, 5), st.booleans()), min_size=2, max_size=60))
def test_auc_properties(pairs):
    scores = np.array([p[0] for p in pairs], dtype=float)
    labels = np.array([int(p[1]) for p in pairs])
    if labels.min() == labels.max():
        with pytest.raises(ClassCoverageError):
            auc(scores, labels)
        return
    a = auc(scores, labels)
    assert abs(a - brute_auc(scores, labels)) < 1e-12
    assert abs(auc(-scores, labels) - (1 - a)) < 1e-12
    assert auc(np.exp(scores) * 3 + 1, labels) == a


def test_auc_rejects_bad_labels():
    with pytest.raises(ValueError):
        auc([1.0, 2.0, 3.0], [0, 1, 2])
    with pytest.raises(ValueError):
        auc([1.0, 2.0], [0, 1, 1])
    with pytest.raises(ClassCoverageError):
        auc([1.0, 2.0], [1, 1])


# --- synthetic data -----------------------------------------------------------


def test_session_layout_and_determinism():
    cfg = SynthConfig(n_repetitions=5, seed=3)
    a, b = generate_session(cfg), generate_session(cfg)
    assert len(a) == 60
    for i in range(0, 60, 12):
        assert sum(t.label == Label.TARGET for t in a[i : i + 12]) == 2
    assert all(np.array_equal(x.data, y.data) and x.label == y.label for x, y in zip(a, b))
    c = generate_session(SynthConfig(n_repetitions=5, seed=4))
    assert not np.array_equal(a[0].data, c[0].data)


def test_planted_bump_location():
    cfg = SynthConfig(n_repetitions=40, seed=1)
    trials = generate_session(cfg)
    t = np.mean([x.data for x in trials if x.label == Label.TARGET], axis=0)
    n = np.mean([x.data for x in trials if x.label == Label.NONTARGET], axis=0)
    peak = int(np.argmax((t - n)[np.argmax(cfg.pattern())]))
    expected = cfg.erp_latency_ms * cfg.sample_rate / 1000
    assert abs(peak - expected) <= 2


def test_zero_amplitude_classes_indistinguishable():
    trials = generate_session(SynthConfig(erp_amplitude=0.0, n_repetitions=30, seed=2))
    var_t = [x.data.var() for x in trials if x.label == Label.TARGET]
    var_n = [x.data.var() for x in trials if x.label == Label.NONTARGET]
    assert stats.ttest_ind(var_t, var_n).pvalue > 0.05


def test_noise_covariance_recovered():
    cfg = SynthConfig(erp_amplitude=0.0, n_repetitions=50, seed=0)
    rec = generate_recording(cfg)
    np.testing.assert_allclose(np.cov(rec.data), cfg.noise(), atol=0.03)


def test_config_validation():
    with pytest.raises(ConfigError):
        SynthConfig(erp_latency_ms=980).validate()
    with pytest.raises(ConfigError):
        SynthConfig(channels=2, noise_covariance=((1.0, 2.0), (2.0, 1.0))).validate()
    with pytest.raises(ConfigError):
        SynthConfig(erp_amplitude=float("nan")).validate()


def test_with_transform_is_congruence():
    cfg = SynthConfig(channels=4)
    v = random_mixing(4, 1.0, 0)
    t = cfg.with_transform(v)
    np.testing.assert_allclose(t.noise(), v.T @ cfg.noise() @ v, atol=1e-12)
    np.testing.assert_allclose(t.pattern(), v.T @ cfg.pattern())


def test_split_recording():
    rec = generate_recording(SynthConfig(n_repetitions=2))
    a, b = split_recording(rec, 10)
    assert len(a.triggers) == 10 and len(b.triggers) == 14


# --- reports ------------------------------------------------------------------


def test_report_invariants_and_jsonl():
    with pytest.raises(ValueError):
        EvaluationReport("x", [CurvePoint(1, 0.5, 0, 1), CurvePoint(1, 0.5, 0, 1)])
    with pytest.raises(ValueError):
        EvaluationReport("x", auc=1.5)
    r = EvaluationReport("demo", [CurvePoint(1.0, 0.7, 0.1, 3), CurvePoint(2.0, 0.8, 0.0, 3)])
    buf = io.StringIO()
    r.write_jsonl(buf)
    lines = [json.loads(s) for s in buf.getvalue().splitlines()]
    assert lines[1] == {"protocol": "demo", "x": 2.0, "mean": 0.8, "std": 0.0, "n": 3}


# --- protocols ----------------------------------------------------------------


@pytest.fixture(scope="module")
def sessions():
    return [generate_session(SynthConfig(n_repetitions=20, erp_amplitude=0.5, seed=s)) for s in range(3)]


def test_learning_curve_full_size_is_canonical(sessions):
    report = learning_curve(sessions, [1, 3, 10])
    assert [p.x for p in report.points] == [1.0, 3.0, 10.0]
    full = [canonical_auc(s[:120], s[120:]) for s in sessions]
    assert report.point(10).mean == pytest.approx(np.mean(full), abs=1e-12)
    assert report.point(1).mean < report.point(10).mean


def test_learning_curve_rejects_bad_sizes(sessions):
    with pytest.raises(ValueError):
        learning_curve(sessions, [0, 2])
    with pytest.raises(ValueError):
        learning_curve(sessions, [11])


@pytest.fixture(scope="module")
def sweep_setup():
    cfg = SynthConfig(n_repetitions=40, seed=11)
    rec = generate_recording(cfg)
    train_rec, test_rec = split_recording(rec, 240)
    from erpgeom.preprocess import epoch

    return clf.train(epoch(train_rec)), test_rec


def test_latency_sweep_grid_and_normalization(sweep_setup):
    model, rec = sweep_setup
    grid = np.arange(-55, 56, 11)
    r = robustness_sweep(model, rec, grid, "latency")
    assert len(r.points) == 11
    assert r.points[0].x == -55 and r.points[-1].x == 55
    assert r.point(0).mean == 1.0
    assert r.point(55).mean < 1.0


def test_jitter_sweep_degrades(sweep_setup):
    model, rec = sweep_setup
    r = robustness_sweep(model, rec, [0, 22, 55], "jitter", seed=5, n_draws=3)
    assert r.point(0).mean == 1.0
    assert r.point(55).mean < 1.0
    assert r.point(55).n == 3
    again = robustness_sweep(model, rec, [0, 22, 55], "jitter", seed=5, n_draws=3)
    assert again.records() == r.records()


def test_sweep_kind_checked(sweep_setup):
    with pytest.raises(ValueError):
        robustness_sweep(*sweep_setup, [0], "drift")


def test_cross_subject_identical_subjects(sessions):
    r = cross_subject_eval(sessions)
    assert len(r.points) == 3
    within = np.mean([canonical_auc(s[:120], s[120:]) for s in sessions])
    assert abs(r.auc - within) < 0.1


def test_cross_subject_rotated_degrades_gracefully():
    base = SynthConfig(n_repetitions=20, seed=0)
    subjects = [
        generate_session(SynthConfig(n_repetitions=20, seed=s, mixing_strength=0.5, mixing_seed=s))
        for s in range(3)
    ]
    r = cross_subject_eval(subjects)
    assert r.auc > 0.6
    with pytest.raises(ValueError):
        cross_subject_eval([])
    with pytest.raises(ValueError):
        cross_subject_eval([generate_session(base)])


def test_replay_frozen_alpha_matches_static(sweep_setup):
    model, _ = sweep_setup
    trials = generate_session(SynthConfig(n_repetitions=8, seed=30))
    report, state = adaptive_replay(model, trials, clf.Schedule.FIXED, alpha=0.0)
    np.testing.assert_allclose(report.metadata["scores"], clf.score_many(model, trials), atol=1e-12)
    assert report.auc == report.metadata["static_auc"]
    assert state.n_seen == len(trials)


def test_replay_deterministic(sweep_setup):
    model, _ = sweep_setup
    trials = generate_session(SynthConfig(n_repetitions=8, seed=31))
    a, _ = adaptive_replay(model, trials, n_full=40)
    b, _ = adaptive_replay(model, trials, n_full=40)
    assert a.records() == b.records()
    assert len(a.points) == 4
    assert a.metadata["final_alpha"] == 1.0
