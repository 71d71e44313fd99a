"""Binary and text file formats.

All binary numbers are little-endian; arrays are 64-bit IEEE floats in
row-major order. Layouts are documented in the README.
"""
from __future__ import annotations

import struct
from pathlib import Path
from typing import Sequence

import numpy as np

from .classifier import MdmModel, Schedule
from .erp_cov import ErpPrototype, EstimatorConfig, Label, Trial
from .exceptions import DimensionMismatchError, FormatError
from .preprocess import ContinuousRecording, Trigger

ARCHIVE_MAGIC = b"ERPA1"
MODEL_MAGIC = b"ERPM1"
RECORDING_MAGIC = b"ERPR1"
FORMAT_VERSION = 1

_ARCHIVE_HEADER = struct.Struct("<5sHIIdI")  # magic, version, C, N, fs, count
_TRIAL_HEADER = struct.Struct("<Bq")  # label, trial id
_MODEL_HEADER = struct.Struct("<5sHIIIdBId")  # magic, version, C, N, n_avg, shrinkage, schedule, n_full, alpha
_RECORDING_HEADER = struct.Struct("<5sHIQd")  # magic, version, C, T, fs

_F8 = np.dtype("<f8")


def _floats(a) -> bytes:
    return np.ascontiguousarray(a, dtype=_F8).tobytes()


def _read_floats(buf, offset, count, shape, what):
    end = offset + 8 * count
    if end > len(buf):
        raise FormatError(f"{what}: truncated data (need {end} bytes, have {len(buf)})")
    return np.frombuffer(buf, dtype=_F8, count=count, offset=offset).reshape(shape).astype(np.float64), end


def _unpack_header(st, buf, magic, what):
    if len(buf) < st.size:
        raise FormatError(f"{what}: file too short for header ({len(buf)} bytes)")
    fields = st.unpack_from(buf, 0)
    if fields[0] != magic:
        raise FormatError(f"{what}: bad magic {fields[0]!r}, expected {magic!r}")
    if fields[1] != FORMAT_VERSION:
        raise FormatError(f"{what}: unsupported format version {fields[1]}")
    return fields[2:]


# --- epoch archive ------------------------------------------------------------


def archive_bytes(trials: Sequence[Trial], sample_rate: float | None = None, shape=None) -> bytes:
    if trials:
        shapes = {t.data.shape for t in trials}
        if len(shapes) != 1:
            raise DimensionMismatchError(f"archive trials differ in shape: {sorted(shapes)}")
        c, n = trials[0].data.shape
        fs = trials[0].sample_rate if sample_rate is None else sample_rate
    else:
        c, n = shape if shape is not None else (0, 0)
        fs = sample_rate or 0.0
    parts = [_ARCHIVE_HEADER.pack(ARCHIVE_MAGIC, FORMAT_VERSION, c, n, fs, len(trials))]
    for t in trials:
        parts.append(_TRIAL_HEADER.pack(int(t.label), int(t.trial_id)))
        parts.append(_floats(t.data))
    return b"".join(parts)


def parse_archive(buf: bytes, what: str = "archive") -> tuple[list[Trial], dict]:
    c, n, fs, count = _unpack_header(_ARCHIVE_HEADER, buf, ARCHIVE_MAGIC, what)
    offset = _ARCHIVE_HEADER.size
    trials = []
    for i in range(count):
        if offset + _TRIAL_HEADER.size > len(buf):
            raise FormatError(f"{what}: record {i} truncated")
        label, trial_id = _TRIAL_HEADER.unpack_from(buf, offset)
        if label not in (0, 1, 2):
            raise FormatError(f"{what}: record {i} has invalid label byte {label}")
        data, offset = _read_floats(buf, offset + _TRIAL_HEADER.size, c * n, (c, n), f"{what} record {i}")
        trials.append(Trial(data=data, label=Label(label), trial_id=trial_id, sample_rate=fs))
    if offset != len(buf):
        raise FormatError(f"{what}: {len(buf) - offset} trailing bytes after {count} records")
    return trials, {"channels": c, "samples": n, "sample_rate": fs}


def write_archive(path, trials: Sequence[Trial], sample_rate: float | None = None, shape=None) -> None:
    Path(path).write_bytes(archive_bytes(trials, sample_rate, shape))


def read_archive(path) -> tuple[list[Trial], dict]:
    return parse_archive(Path(path).read_bytes(), what=str(path))


# --- model ----------------------------------------------------------------------


def model_bytes(
    model: MdmModel, schedule: Schedule = Schedule.LINEAR, n_full: int = 120, alpha: float = 0.0
) -> bytes:
    c, n = model.prototype.data.shape
    header = _MODEL_HEADER.pack(
        MODEL_MAGIC,
        FORMAT_VERSION,
        c,
        n,
        model.prototype.n_averaged,
        model.estimator.shrinkage,
        int(schedule),
        n_full,
        alpha,
    )
    return header + _floats(model.prototype.data) + _floats(model.mean_target) + _floats(model.mean_nontarget)


def parse_model(buf: bytes, what: str = "model") -> tuple[MdmModel, dict]:
    c, n, n_avg, shrinkage, schedule, n_full, alpha = _unpack_header(_MODEL_HEADER, buf, MODEL_MAGIC, what)
    if schedule not in (0, 1):
        raise FormatError(f"{what}: unknown adaptation schedule {schedule}")
    off = _MODEL_HEADER.size
    proto, off = _read_floats(buf, off, c * n, (c, n), what)
    d = 2 * c
    mt, off = _read_floats(buf, off, d * d, (d, d), what)
    mn, off = _read_floats(buf, off, d * d, (d, d), what)
    if off != len(buf):
        raise FormatError(f"{what}: {len(buf) - off} trailing bytes")
    try:
        model = MdmModel(
            prototype=ErpPrototype(proto, n_averaged=n_avg),
            mean_target=mt,
            mean_nontarget=mn,
            estimator=EstimatorConfig(shrinkage=shrinkage),
        )
    except ValueError as exc:
        raise FormatError(f"{what}: invalid model contents ({exc})") from exc
    return model, {"schedule": Schedule(schedule), "n_full": n_full, "alpha": alpha}


def write_model(path, model: MdmModel, **adaptation) -> None:
    Path(path).write_bytes(model_bytes(model, **adaptation))


def read_model(path) -> tuple[MdmModel, dict]:
    return parse_model(Path(path).read_bytes(), what=str(path))


# --- continuous recording + triggers ---------------------------------------------


def write_recording(path, rec: ContinuousRecording) -> None:
    c, t = rec.data.shape
    header = _RECORDING_HEADER.pack(RECORDING_MAGIC, FORMAT_VERSION, c, t, rec.sample_rate)
    Path(path).write_bytes(header + _floats(rec.data))


def read_recording(path) -> tuple[np.ndarray, float]:
    """Channel data (C, T) and sample rate; triggers live in a separate file."""
    buf = Path(path).read_bytes()
    c, t, fs = _unpack_header(_RECORDING_HEADER, buf, RECORDING_MAGIC, str(path))
    data, end = _read_floats(buf, _RECORDING_HEADER.size, c * t, (c, t), str(path))
    if end != len(buf):
        raise FormatError(f"{path}: {len(buf) - end} trailing bytes")
    if not fs > 0:
        raise FormatError(f"{path}: non-positive sample rate {fs}")
    return data, fs


_LABEL_WORDS = {
    "target": Label.TARGET,
    "t": Label.TARGET,
    "1": Label.TARGET,
    "nontarget": Label.NONTARGET,
    "non-target": Label.NONTARGET,
    "nt": Label.NONTARGET,
    "0": Label.NONTARGET,
}


def write_triggers(path, triggers: Sequence[Trigger]) -> None:
    lines = ["# sample_index label"]
    lines += [f"{s} {'target' if lab == Label.TARGET else 'nontarget'}" for s, lab in triggers]
    Path(path).write_text("\n".join(lines) + "\n")


def read_triggers(path) -> list[Trigger]:
    """Text file, one ``<sample_index> <target|nontarget>`` pair per line; ``#`` comments."""
    out = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise FormatError(f"{path}:{lineno}: expected '<sample> <label>', got {raw!r}")
        try:
            sample = int(parts[0])
        except ValueError:
            raise FormatError(f"{path}:{lineno}: sample index {parts[0]!r} is not an integer") from None
        label = _LABEL_WORDS.get(parts[1].lower())
        if label is None:
            raise FormatError(f"{path}:{lineno}: unknown label {parts[1]!r}")
        out.append(Trigger(sample, label))
    return out
