"""Super-trial covariance estimation for ERP data.

A trial ``X`` (C x N) is stacked under the averaged target response ``P1`` to
form a 2C x N super trial whose sample covariance carries the phase-locked
cross-covariance between the prototype and the trial.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .exceptions import DimensionMismatchError, NotPositiveDefiniteError
from .spd import check_spd


class Label(enum.IntEnum):
    NONTARGET = 0
    TARGET = 1
    UNKNOWN = 2


def _frozen(a):
    a = np.array(a, dtype=np.float64)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class Trial:
    """One C x N epoch."""

    data: np.ndarray
    label: Label = Label.UNKNOWN
    trial_id: int = 0
    sample_rate: float = 128.0

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 2:
            raise DimensionMismatchError(f"trial data must be 2-D, got {data.shape}")
        if data.shape[1] < 2:
            raise ValueError("a trial needs at least two samples")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "label", Label(self.label))

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class ErpPrototype:
    data: np.ndarray
    n_averaged: int = 1

    def __post_init__(self):
        object.__setattr__(self, "data", _frozen(self.data))

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_samples(self) -> int:
        return self.data.shape[1]


@dataclass(frozen=True)
class EstimatorConfig:
    """Shrinkage toward ``(trace / 2C) * I``; ``shrinkage`` is the weight of the target."""

    shrinkage: float = 0.0
    target: str = field(default="scaled_identity")

    def __post_init__(self):
        if not 0.0 <= self.shrinkage <= 1.0:
            raise ValueError(f"shrinkage must lie in [0, 1], got {self.shrinkage}")
        if self.target != "scaled_identity":
            raise ValueError(f"unsupported shrinkage target {self.target!r}")

    @classmethod
    def for_shape(cls, n_channels: int, n_samples: int) -> "EstimatorConfig":
        """Default estimator: 0.1 shrinkage once 2C reaches N, none below."""
        return cls(shrinkage=0.1 if 2 * n_channels >= n_samples else 0.0)


def _check_same_shape(trials: Sequence[Trial]):
    shapes = {t.data.shape for t in trials}
    if len(shapes) > 1:
        raise DimensionMismatchError(f"trials have differing shapes {sorted(shapes)}")


def estimate_prototype(trials: Iterable[Trial]) -> ErpPrototype:
    """Average a set of (target) trials into the prototype response."""
    trials = list(trials)
    if not trials:
        raise ValueError("cannot build a prototype from zero trials")
    _check_same_shape(trials)
    data = np.mean([t.data for t in trials], axis=0)
    return ErpPrototype(data=data, n_averaged=len(trials))


def build_super_trial(p1: ErpPrototype, x: Trial) -> np.ndarray:
    """Vertical concatenation ``[P1; X]`` of shape (2C, N)."""
    if p1.data.shape != x.data.shape:
        raise DimensionMismatchError(
            f"prototype {p1.data.shape} does not match trial {x.data.shape}"
        )
    return np.vstack([p1.data, x.data])


def sample_covariance(super_trial: np.ndarray) -> np.ndarray:
    """``X X^T / (N - 1)`` without mean removal; epochs are already zero-mean."""
    x = np.asarray(super_trial, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionMismatchError(f"expected a 2-D super trial, got {x.shape}")
    n = x.shape[1]
    if n < 2:
        raise ValueError("sample covariance needs at least two samples")
    c = x @ x.T / (n - 1)
    return 0.5 * (c + c.T)


def shrink(scm: np.ndarray, shrinkage: float) -> np.ndarray:
    """Convex shrinkage toward the scaled identity; preserves the trace."""
    if shrinkage == 0.0:
        return scm
    dim = scm.shape[-1]
    mu = np.trace(scm) / dim
    if not mu > 0:
        raise NotPositiveDefiniteError(
            "cannot shrink a covariance with zero trace (all-zero input)"
        )
    return (1.0 - shrinkage) * scm + shrinkage * mu * np.eye(dim)


def super_covariance(
    p1: ErpPrototype, x: Trial, cfg: EstimatorConfig | None = None
) -> np.ndarray:
    """Regularized super-trial covariance of one trial, validated as SPD."""
    cfg = cfg or EstimatorConfig()
    scm = sample_covariance(build_super_trial(p1, x))
    return check_spd(shrink(scm, cfg.shrinkage))


def super_covariances(
    p1: ErpPrototype, trials: Sequence[Trial], cfg: EstimatorConfig | None = None
) -> np.ndarray:
    """Stacked super covariances, shape (n_trials, 2C, 2C)."""
    cfg = cfg or EstimatorConfig()
    if not trials:
        return np.empty((0, 2 * p1.n_channels, 2 * p1.n_channels))
    _check_same_shape(trials)
    if trials[0].data.shape != p1.data.shape:
        raise DimensionMismatchError(
            f"prototype {p1.data.shape} does not match trials {trials[0].data.shape}"
        )
    n = p1.n_samples
    xs = np.stack([t.data for t in trials])
    p = np.broadcast_to(p1.data, xs.shape)
    st = np.concatenate([p, xs], axis=1)
    scm = st @ np.swapaxes(st, 1, 2) / (n - 1)
    scm = 0.5 * (scm + np.swapaxes(scm, 1, 2))
    if cfg.shrinkage > 0:
        dim = scm.shape[-1]
        mu = np.trace(scm, axis1=1, axis2=2) / dim
        if np.any(mu <= 0):
            raise NotPositiveDefiniteError(
                "cannot shrink a covariance with zero trace (all-zero input)"
            )
        scm = (1.0 - cfg.shrinkage) * scm + cfg.shrinkage * mu[:, None, None] * np.eye(dim)
    return check_spd(scm)
