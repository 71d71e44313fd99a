"""Minimum distance to Riemannian mean classification of ERP super covariances.

Training estimates the prototype from target trials and one Fréchet mean per
class. The binary score is ``d(mean_nontarget, S) - d(mean_target, S)``, so a
positive score favours the target class.

The adaptive variant blends generic (database) class means toward
subject-specific running means along the geodesic between them.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from . import spd
from .erp_cov import (
    ErpPrototype,
    EstimatorConfig,
    Label,
    Trial,
    estimate_prototype,
    super_covariance,
    super_covariances,
)
from .exceptions import ClassCoverageError, DimensionMismatchError

N_FLASHES = 12


@dataclass(frozen=True)
class MdmModel:
    prototype: ErpPrototype
    mean_target: np.ndarray
    mean_nontarget: np.ndarray
    estimator: EstimatorConfig = EstimatorConfig()
    # solver iterations per class, informational only
    n_iter: tuple[int, int] = field(default=(0, 0), compare=False)

    def __post_init__(self):
        dim = 2 * self.prototype.n_channels
        for name in ("mean_target", "mean_nontarget"):
            m = spd.check_spd(getattr(self, name))
            if m.shape != (dim, dim):
                raise DimensionMismatchError(
                    f"{name} is {m.shape}, expected ({dim}, {dim}) for "
                    f"{self.prototype.n_channels} channels"
                )
            m.setflags(write=False)
            object.__setattr__(self, name, m)

    @property
    def dim(self) -> int:
        return 2 * self.prototype.n_channels

    def swapped(self) -> "MdmModel":
        """Same model with the two class means exchanged."""
        return replace(self, mean_target=self.mean_nontarget, mean_nontarget=self.mean_target)


def _split(trials):
    targets = [t for t in trials if t.label == Label.TARGET]
    nontargets = [t for t in trials if t.label == Label.NONTARGET]
    return targets, nontargets


def train(
    trials: Sequence[Trial],
    cfg: EstimatorConfig | None = None,
    tol: float = 1e-9,
    max_iter: int = 50,
    prototype: ErpPrototype | None = None,
) -> MdmModel:
    """Fit prototype and per-class Riemannian means.

    Parameters
    ----------
    trials : sequence of Trial
        Labeled trials, at least two per class.
    cfg : EstimatorConfig, optional
        Covariance regularization. Defaults to
        :meth:`EstimatorConfig.for_shape` of the trial dimensions.
    tol, max_iter
        Passed to :func:`erpgeom.spd.frechet_mean`.
    prototype : ErpPrototype, optional
        Use a fixed prototype instead of averaging the target trials.
    """
    targets, nontargets = _split(trials)
    if len(targets) < 2 or len(nontargets) < 2:
        raise ClassCoverageError(
            f"need at least 2 trials per class, got {len(targets)} target and "
            f"{len(nontargets)} non-target"
        )
    if cfg is None:
        cfg = EstimatorConfig.for_shape(*targets[0].data.shape)
    p1 = prototype if prototype is not None else estimate_prototype(targets)
    means, iters = [], []
    for group in (targets, nontargets):
        covs = super_covariances(p1, group, cfg)
        m, info = spd.frechet_mean(covs, tol=tol, max_iter=max_iter, return_info=True)
        means.append(m)
        iters.append(info.n_iter)
    return MdmModel(p1, means[0], means[1], cfg, n_iter=tuple(iters))


def _check_trial(model: MdmModel, x: Trial):
    if x.data.shape != model.prototype.data.shape:
        raise DimensionMismatchError(
            f"trial {x.data.shape} does not match model prototype {model.prototype.data.shape}"
        )


def score_covariance(model: MdmModel, cov) -> float:
    return spd.riemannian_distance(model.mean_nontarget, cov) - spd.riemannian_distance(
        model.mean_target, cov
    )


def score(model: MdmModel, x: Trial) -> float:
    """Distance to the non-target mean minus distance to the target mean."""
    _check_trial(model, x)
    return score_covariance(model, super_covariance(model.prototype, x, model.estimator))


def score_many(model: MdmModel, trials: Sequence[Trial]) -> np.ndarray:
    if not trials:
        return np.empty(0)
    for x in trials:
        _check_trial(model, x)
    covs = super_covariances(model.prototype, list(trials), model.estimator)
    return spd.distances(model.mean_nontarget, covs) - spd.distances(model.mean_target, covs)


def predict(model: MdmModel, x: Trial) -> Label:
    """Target iff the score is strictly positive."""
    return Label.TARGET if score(model, x) > 0 else Label.NONTARGET


# --- adaptation -------------------------------------------------------------


class Schedule(enum.IntEnum):
    LINEAR = 0  # alpha = min(1, n / n_full)
    FIXED = 1


@dataclass(frozen=True)
class RunningMean:
    """Incremental geodesic mean: the n-th sample pulls by weight 1/n."""

    mean: np.ndarray | None = None
    count: int = 0

    def update(self, cov) -> "RunningMean":
        if self.mean is None:
            m = spd.check_spd(cov)
        else:
            m = spd.geodesic(self.mean, cov, 1.0 / (self.count + 1))
        m.setflags(write=False)
        return RunningMean(m, self.count + 1)


@dataclass(frozen=True)
class AdaptationState:
    """Generic model plus streaming subject means.

    Instances are immutable; :func:`online_update` returns a new state.
    """

    generic: MdmModel
    subject_target: RunningMean = RunningMean()
    subject_nontarget: RunningMean = RunningMean()
    alpha: float = 0.0
    schedule: Schedule = Schedule.LINEAR
    n_full: int = 120

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")
        if self.n_full < 1:
            raise ValueError("n_full must be positive")

    @property
    def n_seen(self) -> int:
        return self.subject_target.count + self.subject_nontarget.count


def start_adaptation(
    generic: MdmModel, schedule: Schedule = Schedule.LINEAR, alpha: float = 0.0, n_full: int = 120
) -> AdaptationState:
    if schedule == Schedule.LINEAR:
        alpha = 0.0
    return AdaptationState(generic, alpha=alpha, schedule=Schedule(schedule), n_full=n_full)


def adapt_means(state: AdaptationState, fallback: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Blend generic and subject means at ``state.alpha``.

    With ``fallback`` a class that has no subject data keeps its generic
    mean; otherwise that situation raises for ``alpha > 0``.
    """
    out = []
    for generic, running in (
        (state.generic.mean_target, state.subject_target),
        (state.generic.mean_nontarget, state.subject_nontarget),
    ):
        if state.alpha == 0.0:
            out.append(generic)
        elif running.count == 0:
            if not fallback:
                raise ClassCoverageError("alpha > 0 but a class has no subject data yet")
            out.append(generic)
        else:
            out.append(spd.geodesic(generic, running.mean, state.alpha))
    return out[0], out[1]


def current_model(state: AdaptationState) -> MdmModel:
    """Snapshot of the blended classifier (generic means where data is missing)."""
    target, nontarget = adapt_means(state, fallback=True)
    return replace(state.generic, mean_target=target, mean_nontarget=nontarget)


def online_update(state: AdaptationState, x: Trial, true_label: Label) -> AdaptationState:
    """Fold one labeled trial into the subject mean of its class, then advance alpha."""
    _check_trial(state.generic, x)
    true_label = Label(true_label)
    if true_label == Label.UNKNOWN:
        raise ValueError("supervised adaptation needs a Target or NonTarget label")
    cov = super_covariance(state.generic.prototype, x, state.generic.estimator)
    if true_label == Label.TARGET:
        state = replace(state, subject_target=state.subject_target.update(cov))
    else:
        state = replace(state, subject_nontarget=state.subject_nontarget.update(cov))
    if state.schedule == Schedule.LINEAR:
        both = state.subject_target.count > 0 and state.subject_nontarget.count > 0
        alpha = min(1.0, state.n_seen / state.n_full) if both else 0.0
        state = replace(state, alpha=alpha)
    return state


def consolidate(
    state: AdaptationState, trials: Sequence[Trial], tol: float = 1e-9, max_iter: int = 50
) -> AdaptationState:
    """Replace the streaming subject means by batch Fréchet means of ``trials``.

    The running means serve as starting points, so this costs a few
    iterations once a session has been replayed.
    """
    targets, nontargets = _split(trials)
    out = {}
    for name, group in (("subject_target", targets), ("subject_nontarget", nontargets)):
        running = getattr(state, name)
        if not group:
            out[name] = running
            continue
        covs = super_covariances(state.generic.prototype, group, state.generic.estimator)
        m = spd.frechet_mean(covs, tol=tol, max_iter=max_iter, init=running.mean)
        m.setflags(write=False)
        out[name] = RunningMean(m, len(group))
    return replace(state, **out)


# --- game protocol ----------------------------------------------------------


def select_target(scores) -> int:
    """Flash index (1-based) with the highest score averaged over repetitions.

    ``scores`` holds one row of 12 flash scores per repetition. Ties go to
    the lowest index.
    """
    s = np.asarray(scores, dtype=float)
    if s.ndim == 1:
        s = s[None]
    if s.ndim != 2 or s.shape[1] != N_FLASHES or s.shape[0] < 1:
        raise ValueError(f"expected repetitions of {N_FLASHES} scores, got shape {s.shape}")
    return int(np.argmax(s.mean(axis=0))) + 1
