"""From continuous recordings with stimulus triggers to labeled epochs.

Pipeline order: band-pass at the acquisition rate, decimate, then cut one
epoch per trigger. Latency and jitter injection operate on trigger lists so
that robustness experiments can re-epoch the same recording.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from typing import NamedTuple, Sequence

import numpy as np
from scipy import signal

from .erp_cov import Label, Trial, _frozen
from .exceptions import ConfigError, DimensionMismatchError

logger = logging.getLogger(__name__)


class Trigger(NamedTuple):
    sample: int
    label: Label


@dataclass(frozen=True)
class FilterSpec:
    low_hz: float = 1.0
    high_hz: float = 20.0
    order: int = 5

    def validate(self, fs: float) -> None:
        if not 0 < self.low_hz < self.high_hz < fs / 2:
            raise ConfigError(
                f"band edges must satisfy 0 < low < high < fs/2, got "
                f"low={self.low_hz}, high={self.high_hz}, fs={fs}"
            )
        if int(self.order) != self.order or self.order < 1:
            raise ConfigError(f"filter order must be a positive integer, got {self.order}")


@dataclass(frozen=True)
class ContinuousRecording:
    data: np.ndarray  # (C, T)
    sample_rate: float
    triggers: tuple[Trigger, ...] = ()

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 2:
            raise DimensionMismatchError(f"recording must be 2-D, got {data.shape}")
        triggers = tuple(Trigger(int(s), Label(lab)) for s, lab in self.triggers)
        idx = np.array([t.sample for t in triggers], dtype=np.int64)
        if idx.size and (np.any(np.diff(idx) <= 0) or idx[0] < 0 or idx[-1] >= data.shape[1]):
            raise ValueError("trigger indices must be strictly increasing and inside the recording")
        if self.sample_rate <= 0:
            raise ConfigError("sample rate must be positive")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "triggers", triggers)

    @property
    def n_channels(self) -> int:
        return self.data.shape[0]

    @property
    def n_times(self) -> int:
        return self.data.shape[1]


# --- filter design ----------------------------------------------------------


def _pair_sections(poles):
    """Group band-pass poles into conjugate (or real-real) pairs."""
    tol = 1e-10 * max(1.0, np.max(np.abs(poles)))
    cplx = sorted((p for p in poles if p.imag > tol), key=abs)
    real = sorted(p.real for p in poles if abs(p.imag) <= tol)
    if len(real) % 2:
        raise RuntimeError("odd number of real poles in a band-pass design")
    pairs = [(p, np.conj(p)) for p in cplx]
    pairs += [(complex(real[i]), complex(real[i + 1])) for i in range(0, len(real), 2)]
    return pairs


def design_butterworth_bandpass(spec: FilterSpec, fs: float) -> np.ndarray:
    """Digital Butterworth band-pass as second-order sections.

    An order-``n`` analog low-pass prototype is moved to the prewarped band by
    ``s -> (s^2 + w0^2) / (bw s)`` and mapped with the bilinear transform.
    Each of the ``n`` sections has numerator ``g (1 - z^-2)``: one zero at DC
    and one at Nyquist.

    Returns
    -------
    sos : ndarray, shape (order, 6)
        Rows ``[b0, b1, b2, 1, a1, a2]``.
    """
    spec.validate(fs)
    n = int(spec.order)
    k = np.arange(1, n + 1)
    proto = np.exp(1j * np.pi * (2 * k + n - 1) / (2 * n))

    warp_lo = 2 * fs * np.tan(np.pi * spec.low_hz / fs)
    warp_hi = 2 * fs * np.tan(np.pi * spec.high_hz / fs)
    w0 = np.sqrt(warp_lo * warp_hi)
    bw = warp_hi - warp_lo

    pb = proto * bw / 2
    root = np.sqrt(pb**2 - w0**2 + 0j)
    analog = np.concatenate([pb + root, pb - root])
    digital = (1 + analog / (2 * fs)) / (1 - analog / (2 * fs))

    sos = np.zeros((n, 6))
    for i, (p, q) in enumerate(_pair_sections(digital)):
        sos[i] = [1.0, 0.0, -1.0, 1.0, -(p + q).real, (p * q).real]

    # unit gain at the digital image of the analog band center
    f_center = fs / np.pi * np.arctan(w0 / (2 * fs))
    g = np.abs(frequency_response(sos, [f_center], fs))[0]
    sos[:, :3] *= g ** (-1.0 / n)
    return sos


def frequency_response(sos: np.ndarray, freqs, fs: float) -> np.ndarray:
    """Complex transfer function of a section cascade at ``freqs`` (Hz)."""
    z = np.exp(-2j * np.pi * np.asarray(freqs, dtype=float) / fs)
    h = np.ones_like(z)
    for b0, b1, b2, a0, a1, a2 in sos:
        h *= (b0 + b1 * z + b2 * z**2) / (a0 + a1 * z + a2 * z**2)
    return h


def sos_poles(sos: np.ndarray) -> np.ndarray:
    return np.concatenate([np.roots(row[3:]) for row in sos])


# --- signal operations ------------------------------------------------------


def filter_signal(rec: ContinuousRecording, sos: np.ndarray) -> ContinuousRecording:
    """Causal, channel-wise filtering from zero initial conditions."""
    return replace(rec, data=signal.sosfilt(sos, rec.data, axis=1))


def downsample(rec: ContinuousRecording, target_hz: float) -> ContinuousRecording:
    """Integer decimation; trigger indices are floor-divided by the factor."""
    ratio = rec.sample_rate / target_hz
    k = int(round(ratio))
    if k < 1 or abs(ratio - k) > 1e-9:
        raise ConfigError(
            f"sample rate {rec.sample_rate} Hz is not an integer multiple of {target_hz} Hz"
        )
    if k == 1:
        return rec
    triggers = []
    for s, lab in rec.triggers:
        s = s // k
        # two triggers closer than k samples collapse onto one index
        if triggers and triggers[-1].sample == s:
            logger.warning("trigger at decimated sample %d collapses with its predecessor", s)
            continue
        triggers.append(Trigger(s, lab))
    return ContinuousRecording(
        data=rec.data[:, ::k], sample_rate=rec.sample_rate / k, triggers=tuple(triggers)
    )


def epoch_length(window_s: float, fs: float) -> int:
    return int(round(window_s * fs))


def epoch(rec: ContinuousRecording, window_s: float = 1.0) -> list[Trial]:
    """One mean-centered trial per trigger, starting at the trigger sample.

    Triggers too close to the end of the recording for a full window are
    skipped and logged. The trial id is the trigger's position in
    ``rec.triggers``.
    """
    n = epoch_length(window_s, rec.sample_rate)
    if n < 2:
        raise ConfigError(f"epoch window of {window_s} s gives fewer than 2 samples")
    trials = []
    skipped = 0
    for i, (s, lab) in enumerate(rec.triggers):
        if s + n > rec.n_times:
            skipped += 1
            continue
        x = rec.data[:, s : s + n]
        trials.append(
            Trial(
                data=x - x.mean(axis=1, keepdims=True),
                label=lab,
                trial_id=i,
                sample_rate=rec.sample_rate,
            )
        )
    if skipped:
        logger.warning("skipped %d trigger(s) without room for a %d-sample epoch", skipped, n)
    return trials


def preprocess_recording(
    rec: ContinuousRecording,
    spec: FilterSpec = FilterSpec(),
    target_hz: float = 128.0,
) -> ContinuousRecording:
    """Band-pass at the source rate, then decimate to ``target_hz``."""
    sos = design_butterworth_bandpass(spec, rec.sample_rate)
    return downsample(filter_signal(rec, sos), target_hz)


# --- nuisance injection -----------------------------------------------------


def _shift(triggers, offsets, n_times):
    out = []
    for (s, lab), d in zip(triggers, offsets):
        s = int(s) + int(d)
        if s < 0 or (n_times is not None and s >= n_times):
            continue
        out.append(Trigger(s, Label(lab)))
    return out


def inject_latency(
    triggers: Sequence[Trigger], delay_ms: float, fs: float, n_times: int | None = None
) -> list[Trigger]:
    """Shift every trigger by ``round(delay_ms * fs / 1000)`` samples.

    Shifted triggers falling before 0 or, when ``n_times`` is given, at or
    past the end of the recording are dropped.
    """
    d = int(np.round(delay_ms * fs / 1000.0))
    return _shift(triggers, [d] * len(triggers), n_times)


def inject_jitter(
    triggers: Sequence[Trigger],
    std_ms: float,
    fs: float,
    seed: int | None = None,
    n_times: int | None = None,
) -> list[Trigger]:
    """Independent zero-mean normal shift per trigger, rounded to samples."""
    rng = np.random.default_rng(seed)
    offsets = np.round(rng.normal(0.0, std_ms * fs / 1000.0, size=len(triggers)))
    shifted = _shift(triggers, offsets.astype(np.int64), n_times)
    return sorted(shifted, key=lambda t: t.sample)
