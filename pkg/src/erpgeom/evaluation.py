"""Synthetic ERP sessions and evaluation protocols.

Synthetic recordings are spatially colored, temporally white Gaussian noise.
Target triggers additionally carry a Gaussian bump (one spatial pattern times
one time course) at a fixed post-stimulus latency. Triggers are spaced so that
epochs never overlap, leaving room for latency and jitter shifts.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from typing import IO, Sequence

import numpy as np
from scipy.stats import rankdata

from . import classifier
from .classifier import AdaptationState, MdmModel, Schedule
from .erp_cov import EstimatorConfig, Label, Trial
from .exceptions import ClassCoverageError, ConfigError
from .preprocess import ContinuousRecording, Trigger, epoch, epoch_length, inject_jitter, inject_latency
from .spd import is_spd


# --- synthetic data ---------------------------------------------------------


def default_pattern(n_channels: int) -> np.ndarray:
    c = np.arange(n_channels)
    mid = (n_channels - 1) / 2
    p = np.exp(-((c - mid) ** 2) / (2 * max(n_channels / 3, 1.0) ** 2))
    return p / p.max()


def default_noise_covariance(n_channels: int, rho: float = 0.5) -> np.ndarray:
    c = np.arange(n_channels)
    return rho ** np.abs(c[:, None] - c[None, :])


@dataclass(frozen=True)
class SynthConfig:
    """Parameters of one synthetic subject/session.

    ``erp_amplitude`` is the peak of the planted response on the channel where
    the spatial pattern is largest (patterns are used as given; the default
    one peaks at 1). ``erp_width_ms`` is the standard deviation of the
    Gaussian time course. A nonzero ``mixing_strength`` views the subject
    through the random channel map ``random_mixing(channels, mixing_strength,
    mixing_seed)``, applied to both the pattern and the noise covariance.
    """

    channels: int = 8
    sample_rate: float = 128.0
    erp_amplitude: float = 1.0
    erp_latency_ms: float = 300.0
    erp_width_ms: float = 50.0
    spatial_pattern: tuple[float, ...] | None = None
    noise_covariance: tuple[tuple[float, ...], ...] | None = None
    n_repetitions: int = 50
    targets_per_repetition: int = 2
    flashes_per_repetition: int = 12
    window_s: float = 1.0
    gap_s: float = 0.25
    noise_rho: float = 0.5
    mixing_strength: float = 0.0
    mixing_seed: int = 0
    seed: int = 0

    def _mixing(self):
        if self.mixing_strength == 0:
            return None
        return random_mixing(self.channels, self.mixing_strength, self.mixing_seed)

    def pattern(self) -> np.ndarray:
        if self.spatial_pattern is None:
            p = default_pattern(self.channels)
        else:
            p = np.asarray(self.spatial_pattern, dtype=float)
        v = self._mixing()
        return p if v is None or p.shape != (self.channels,) else v.T @ p

    def noise(self) -> np.ndarray:
        if self.noise_covariance is None:
            n = default_noise_covariance(self.channels, self.noise_rho)
        else:
            n = np.asarray(self.noise_covariance, dtype=float)
        v = self._mixing()
        if v is None or n.shape != (self.channels, self.channels):
            return n
        n = v.T @ n @ v
        return 0.5 * (n + n.T)

    def validate(self) -> None:
        if self.channels < 1 or self.sample_rate <= 0:
            raise ConfigError("channels and sample_rate must be positive")
        if not np.isfinite(self.erp_amplitude) or self.erp_width_ms <= 0:
            raise ConfigError("erp amplitude must be finite and width positive")
        if self.pattern().shape != (self.channels,) or not np.all(np.isfinite(self.pattern())):
            raise ConfigError(f"spatial pattern must be a finite {self.channels}-vector")
        noise = self.noise()
        if noise.shape != (self.channels, self.channels) or not is_spd(noise):
            raise ConfigError("noise covariance must be an SPD matrix matching the channel count")
        if self.erp_latency_ms < 0 or self.erp_latency_ms + self.erp_width_ms > 1000 * self.window_s:
            raise ConfigError("erp latency + width must fit inside the epoch window")
        if not 0 <= self.targets_per_repetition <= self.flashes_per_repetition:
            raise ConfigError("targets per repetition must lie in [0, flashes per repetition]")
        if self.n_repetitions < 0 or self.gap_s < 0 or self.window_s <= 0:
            raise ConfigError("repetitions, gap and window must be non-negative")
        if not -1 < self.noise_rho < 1:
            raise ConfigError("noise_rho must lie in (-1, 1)")

    def with_transform(self, v) -> "SynthConfig":
        """Subject seen through the linear channel map ``x -> V^T x``."""
        v = np.asarray(v, dtype=float)
        pattern = v.T @ self.pattern()
        noise = v.T @ self.noise() @ v
        noise = 0.5 * (noise + noise.T)
        return replace(
            self,
            spatial_pattern=tuple(pattern),
            noise_covariance=tuple(map(tuple, noise)),
            mixing_strength=0.0,
        )


def random_mixing(n_channels: int, strength: float, seed: int) -> np.ndarray:
    """Invertible channel map ``expm(strength * A)`` for a Gaussian random ``A``."""
    from scipy.linalg import expm

    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n_channels, n_channels)) / np.sqrt(n_channels)
    return expm(strength * a)


def generate_recording(cfg: SynthConfig) -> ContinuousRecording:
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    fs = cfg.sample_rate
    n = epoch_length(cfg.window_s, fs)
    gap = int(round(cfg.gap_s * fs))
    spacing = n + gap
    n_trials = cfg.n_repetitions * cfg.flashes_per_repetition
    n_times = gap + n_trials * spacing + gap

    labels = []
    base = [Label.TARGET] * cfg.targets_per_repetition + [Label.NONTARGET] * (
        cfg.flashes_per_repetition - cfg.targets_per_repetition
    )
    for _ in range(cfg.n_repetitions):
        labels.extend(base[i] for i in rng.permutation(len(base)))
    starts = gap + spacing * np.arange(n_trials)

    chol = np.linalg.cholesky(cfg.noise())
    data = chol @ rng.standard_normal((cfg.channels, n_times))

    pattern = cfg.pattern()
    width = cfg.erp_width_ms * fs / 1000.0
    offset = cfg.erp_latency_ms * fs / 1000.0
    half = int(np.ceil(6 * width))
    for s, lab in zip(starts, labels):
        if lab != Label.TARGET or cfg.erp_amplitude == 0:
            continue
        center = s + offset
        t = np.arange(max(int(center) - half, 0), min(int(center) + half + 1, n_times))
        bump = cfg.erp_amplitude * np.exp(-((t - center) ** 2) / (2 * width**2))
        data[:, t] += np.outer(pattern, bump)

    triggers = tuple(Trigger(int(s), lab) for s, lab in zip(starts, labels))
    return ContinuousRecording(data=data, sample_rate=fs, triggers=triggers)


def generate_session(cfg: SynthConfig) -> list[Trial]:
    """Epoched synthetic session, trials in chronological order."""
    return epoch(generate_recording(cfg), cfg.window_s)


def split_recording(rec: ContinuousRecording, n_first: int):
    """Split trigger list into the first ``n_first`` triggers and the rest."""
    return (
        replace(rec, triggers=rec.triggers[:n_first]),
        replace(rec, triggers=rec.triggers[n_first:]),
    )


# --- metrics ----------------------------------------------------------------


def auc(scores, labels) -> float:
    """Area under the ROC curve from the Mann-Whitney rank sum (midranks on ties).

    ``labels`` are :class:`Label` values or 0/1; 1 is the target class.
    """
    scores = np.asarray(scores, dtype=float)
    codes = np.asarray([int(lab) for lab in labels])
    if np.any((codes != Label.TARGET) & (codes != Label.NONTARGET)):
        raise ValueError("AUC labels must be target (1) or non-target (0)")
    pos = codes == Label.TARGET
    if scores.shape != pos.shape:
        raise ValueError("scores and labels differ in length")
    n_pos = int(pos.sum())
    n_neg = pos.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ClassCoverageError("AUC needs both target and non-target scores")
    ranks = rankdata(scores, method="average")
    u = ranks[pos].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


# --- reports ----------------------------------------------------------------


@dataclass(frozen=True)
class CurvePoint:
    x: float
    mean: float
    std: float
    n: int


@dataclass
class EvaluationReport:
    protocol: str
    points: list[CurvePoint] = field(default_factory=list)
    auc: float | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        xs = [p.x for p in self.points]
        if any(b <= a for a, b in zip(xs, xs[1:])):
            raise ValueError("curve x-values must be strictly increasing")
        if self.auc is not None and not 0.0 <= self.auc <= 1.0:
            raise ValueError(f"AUC out of range: {self.auc}")

    def records(self) -> list[dict]:
        return [
            {"protocol": self.protocol, "x": p.x, "mean": p.mean, "std": p.std, "n": p.n}
            for p in self.points
        ]

    def write_jsonl(self, fh: IO[str]) -> None:
        for rec in self.records():
            fh.write(json.dumps(rec) + "\n")

    def point(self, x) -> CurvePoint:
        for p in self.points:
            if p.x == x:
                return p
        raise KeyError(x)


def _point(x, values):
    values = np.asarray(values, dtype=float)
    return CurvePoint(float(x), float(values.mean()), float(values.std()), int(values.size))


# --- protocols --------------------------------------------------------------


def _labels(trials):
    return [t.label for t in trials]


def canonical_auc(train_trials, test_trials, cfg: EstimatorConfig | None = None, **mean_kw) -> float:
    """Train on one split, AUC of the scores on the other."""
    model = classifier.train(train_trials, cfg, **mean_kw)
    return auc(classifier.score_many(model, test_trials), _labels(test_trials))


def learning_curve(
    sessions: Sequence[Sequence[Trial]],
    sizes: Sequence[int],
    train_fraction: float = 0.5,
    trials_per_repetition: int = 12,
    cfg: EstimatorConfig | None = None,
) -> EvaluationReport:
    """AUC as a function of the number of calibration repetitions.

    Each session (one per seed) is split chronologically: the leading
    ``train_fraction`` of its repetitions form the calibration pool, the
    remainder is the test split. For each size the model is trained on that
    many leading repetitions of the pool.
    """
    sizes = [int(s) for s in sizes]
    if not sizes or any(s < 1 for s in sizes):
        raise ValueError("training sizes must be positive repetition counts")
    per_size = {s: [] for s in sizes}
    for trials in sessions:
        n_reps = len(trials) // trials_per_repetition
        pool = int(n_reps * train_fraction)
        if max(sizes) > pool:
            raise ValueError(f"size {max(sizes)} exceeds the {pool} available training repetitions")
        test = list(trials[pool * trials_per_repetition :])
        for s in sizes:
            train = list(trials[: s * trials_per_repetition])
            per_size[s].append(canonical_auc(train, test, cfg))
    points = [_point(s, per_size[s]) for s in sorted(sizes)]
    return EvaluationReport(
        "learning-curve",
        points,
        auc=points[-1].mean,
        metadata={"sizes": sorted(sizes), "n_sessions": len(sessions)},
    )


def robustness_sweep(
    model: MdmModel,
    rec: ContinuousRecording,
    grid_ms: Sequence[float],
    kind: str = "latency",
    window_s: float = 1.0,
    seed: int = 0,
    n_draws: int = 5,
) -> EvaluationReport:
    """Normalized AUC of a fixed model as test triggers are delayed or jittered.

    Every value is divided by the AUC obtained with the original triggers.
    Latency shifts are deterministic; jitter is averaged over ``n_draws``
    seeded draws per grid value.
    """
    if kind not in ("latency", "jitter"):
        raise ValueError(f"unknown sweep kind {kind!r}")
    fs = rec.sample_rate

    def run(triggers):
        trials = epoch(replace(rec, triggers=tuple(triggers)), window_s)
        return auc(classifier.score_many(model, trials), _labels(trials))

    reference = run(rec.triggers)
    points = []
    for i, value in enumerate(sorted(grid_ms)):
        if kind == "latency":
            vals = [run(inject_latency(rec.triggers, value, fs, rec.n_times)) / reference]
        else:
            draws = range(1) if value == 0 else range(n_draws)
            vals = [
                run(inject_jitter(rec.triggers, value, fs, seed=seed + 1000 * i + d, n_times=rec.n_times))
                / reference
                for d in draws
            ]
        points.append(_point(value, vals))
    return EvaluationReport(
        f"{kind}-sweep",
        points,
        auc=reference,
        metadata={"reference_auc": reference, "seed": seed, "n_draws": n_draws},
    )


def cross_subject_eval(
    sessions: Sequence[Sequence[Trial]], cfg: EstimatorConfig | None = None
) -> EvaluationReport:
    """Leave-one-subject-out: train on the pooled others, test on the held-out subject."""
    if len(sessions) < 2:
        raise ValueError("cross-subject evaluation needs at least two subjects")
    per_subject = []
    for k, held_out in enumerate(sessions):
        pooled = [t for j, s in enumerate(sessions) if j != k for t in s]
        per_subject.append(canonical_auc(pooled, list(held_out), cfg))
    points = [CurvePoint(float(k), a, 0.0, 1) for k, a in enumerate(per_subject)]
    return EvaluationReport(
        "cross-subject",
        points,
        auc=float(np.mean(per_subject)),
        metadata={"per_subject_auc": per_subject, "std": float(np.std(per_subject))},
    )


def adaptive_replay(
    generic: MdmModel,
    trials: Sequence[Trial],
    schedule: Schedule = Schedule.LINEAR,
    n_full: int = 120,
    alpha: float = 0.0,
    n_blocks: int = 4,
    consolidate: bool = False,
) -> tuple[EvaluationReport, AdaptationState]:
    """Score each trial with the current blended means, then adapt on its label.

    Returns the per-block AUC report and the final adaptation state. The
    report metadata also carries the static generic model's AUC on the same
    blocks for comparison. With ``consolidate`` the final state's subject
    means are refined into batch Fréchet means of the replayed session.
    """
    state = classifier.start_adaptation(generic, schedule, alpha, n_full)
    scores = np.empty(len(trials))
    for i, x in enumerate(trials):
        scores[i] = classifier.score(classifier.current_model(state), x)
        if x.label != Label.UNKNOWN:
            state = classifier.online_update(state, x, x.label)
    if consolidate:
        state = classifier.consolidate(state, [x for x in trials if x.label != Label.UNKNOWN])
    static = classifier.score_many(generic, list(trials))
    labels = _labels(trials)
    blocks = np.array_split(np.arange(len(trials)), n_blocks)
    adaptive_auc, static_auc = [], []
    for idx in blocks:
        block_labels = [labels[i] for i in idx]
        adaptive_auc.append(auc(scores[idx], block_labels))
        static_auc.append(auc(static[idx], block_labels))
    points = [CurvePoint(float(b + 1), a, 0.0, len(idx)) for b, (a, idx) in enumerate(zip(adaptive_auc, blocks))]
    report = EvaluationReport(
        "adaptive-replay",
        points,
        auc=auc(scores, labels),
        metadata={
            "static_block_auc": static_auc,
            "static_auc": auc(static, labels),
            "schedule": schedule.name.lower(),
            "n_full": n_full,
            "final_alpha": state.alpha,
            "scores": scores.tolist(),
        },
    )
    return report, state
