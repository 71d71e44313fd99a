"""``erpgeom`` command-line interface.

Exit codes: 0 success, 1 numerical failure, 2 input format, 3 class coverage,
4 dimension mismatch, 5 unknown protocol, 6 invalid config.
"""
from __future__ import annotations

import argparse
import logging
import sys
from contextlib import contextmanager
from typing import Sequence

from . import classifier, config, evaluation, fileformats
from .classifier import Schedule
from .config import RunConfig
from .erp_cov import EstimatorConfig, Label
from .evaluation import CurvePoint, EvaluationReport, SynthConfig
from .exceptions import (
    ClassCoverageError,
    ConfigError,
    ConvergenceError,
    DimensionMismatchError,
    FormatError,
    NotPositiveDefiniteError,
    SymmetryError,
)
from .preprocess import ContinuousRecording, FilterSpec, epoch, preprocess_recording

EXIT_OK = 0
EXIT_NUMERIC = 1
EXIT_FORMAT = 2
EXIT_COVERAGE = 3
EXIT_DIMENSION = 4
EXIT_PROTOCOL = 5
EXIT_CONFIG = 6

PROTOCOLS = ("auc", "learning-curve", "latency-sweep", "jitter-sweep", "cross-subject")

log = logging.getLogger("erpgeom")


class UnknownProtocol(Exception):
    pass


# --- helpers ------------------------------------------------------------------


def _add_config_flags(parser, cls, skip=()):
    parser.add_argument("--config", metavar="FILE", help="flat key = value config file")
    group = parser.add_argument_group("config keys (override the config file)")
    for name, tp in config.settable_fields(cls).items():
        if name in skip:
            continue
        flags = [f"--{name}"]
        if "_" in name:
            flags.append(f"--{name.replace('_', '-')}")
        default = next(f.default for f in cls.__dataclass_fields__.values() if f.name == name)
        shown = "env " + config.SEED_ENV + " or 0" if name == "seed" else default
        group.add_argument(*flags, dest=name, metavar=tp.__name__.upper(), default=None,
                           help=f"(default: {shown})")


def _overrides(args, cls):
    return {k: getattr(args, k, None) for k in config.settable_fields(cls)}


def _run_config(args) -> RunConfig:
    cfg = config.build(RunConfig, args.config, _overrides(args, RunConfig))
    cfg.validate()
    return cfg


def _estimator(cfg: RunConfig, n_channels: int, n_samples: int) -> EstimatorConfig:
    return EstimatorConfig(shrinkage=cfg.shrinkage_value(n_channels, n_samples))


def _read_archive(path):
    try:
        return fileformats.read_archive(path)
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc


def _read_model(path):
    try:
        return fileformats.read_model(path)
    except OSError as exc:
        raise FormatError(f"cannot read {path}: {exc}") from exc


def _check_dims(model, meta, path):
    expected = model.prototype.data.shape
    got = (meta["channels"], meta["samples"])
    if got != expected:
        raise DimensionMismatchError(
            f"{path}: archive trials are {got[0]}x{got[1]}, model expects {expected[0]}x{expected[1]}"
        )


def _load_recording(rec_path, trig_path) -> ContinuousRecording:
    try:
        data, fs = fileformats.read_recording(rec_path)
        triggers = fileformats.read_triggers(trig_path)
    except OSError as exc:
        raise FormatError(str(exc)) from exc
    prev = -1
    for k, (s, _) in enumerate(triggers):
        if s <= prev or s >= data.shape[1]:
            raise FormatError(
                f"{trig_path}: trigger #{k + 1} at sample {s} is out of order or outside "
                f"the {data.shape[1]}-sample recording"
            )
        prev = s
    return ContinuousRecording(data=data, sample_rate=fs, triggers=tuple(triggers))


def _preprocess(rec, cfg: RunConfig) -> ContinuousRecording:
    spec = FilterSpec(cfg.low_hz, cfg.high_hz, cfg.filter_order)
    return preprocess_recording(rec, spec, cfg.target_hz)


@contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w") as fh:
            yield fh


def _emit(report: EvaluationReport, path):
    with _output(path) as fh:
        report.write_jsonl(fh)
    if path not in (None, "-"):
        auc = "n/a" if report.auc is None else f"{report.auc:.4f}"
        print(f"{report.protocol}: {len(report.points)} record(s), auc {auc} -> {path}")


def _counts(trials):
    n_t = sum(t.label == Label.TARGET for t in trials)
    n_nt = sum(t.label == Label.NONTARGET for t in trials)
    return n_t, n_nt


# --- commands -------------------------------------------------------------------


def cmd_preprocess(args) -> int:
    cfg = _run_config(args)
    rec = _load_recording(args.recording, args.triggers)
    out = _preprocess(rec, cfg)
    trials = epoch(out, cfg.window_s)
    n = int(round(cfg.window_s * out.sample_rate))
    fileformats.write_archive(args.output, trials, sample_rate=out.sample_rate, shape=(rec.n_channels, n))
    n_t, n_nt = _counts(trials)
    print(f"trials: {len(trials)} (target {n_t}, nontarget {n_nt})")
    print(f"dropped triggers: {len(rec.triggers) - len(trials)}")
    print(f"channels: {rec.n_channels}, samples: {n}, rate: {out.sample_rate:g} Hz")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _run_config(args)
    trials, meta = _read_archive(args.archive)
    est = _estimator(cfg, meta["channels"], meta["samples"])
    model = classifier.train(trials, est, tol=cfg.mean_tol, max_iter=cfg.mean_max_iter)
    fileformats.write_model(
        args.output, model, schedule=Schedule[cfg.schedule.upper()], n_full=cfg.n_full, alpha=cfg.alpha
    )
    n_t, n_nt = _counts(trials)
    print(f"target trials: {n_t}")
    print(f"nontarget trials: {n_nt}")
    print(f"mean iterations: target {model.n_iter[0]}, nontarget {model.n_iter[1]}")
    return EXIT_OK


def cmd_score(args) -> int:
    model, _ = _read_model(args.model)
    trials, meta = _read_archive(args.archive)
    _check_dims(model, meta, args.archive)
    scores = classifier.score_many(model, trials)
    with _output(args.output) as fh:
        fh.write("trial_id\tscore\tpredicted\n")
        for t, s in zip(trials, scores):
            pred = "target" if s > 0 else "nontarget"
            fh.write(f"{t.trial_id}\t{s:.12g}\t{pred}\n")
    return EXIT_OK


def _split_repetitions(trials, cfg: RunConfig):
    n_reps = len(trials) // cfg.trials_per_repetition
    n_train = int(n_reps * cfg.train_fraction) * cfg.trials_per_repetition
    return trials[:n_train], trials[n_train:]


def _sweep_inputs(args, cfg):
    if not (args.recording and args.triggers):
        raise ConfigError("sweeps need --recording and --triggers")
    rec = _preprocess(_load_recording(args.recording, args.triggers), cfg)
    if args.model:
        model, _ = _read_model(args.model)
        return model, rec
    n_first = int(len(rec.triggers) * cfg.train_fraction)
    first, rest = evaluation.split_recording(rec, n_first)
    trials = epoch(first, cfg.window_s)
    est = _estimator(cfg, rec.n_channels, int(round(cfg.window_s * rec.sample_rate)))
    model = classifier.train(trials, est, tol=cfg.mean_tol, max_iter=cfg.mean_max_iter)
    return model, rest


def cmd_evaluate(args) -> int:
    if args.protocol not in PROTOCOLS:
        raise UnknownProtocol(args.protocol)
    cfg = _run_config(args)
    sessions = []
    for path in args.archives:
        trials, meta = _read_archive(path)
        sessions.append((trials, meta, path))
    est = None
    if sessions:
        est = _estimator(cfg, sessions[0][1]["channels"], sessions[0][1]["samples"])
    mean_kw = {"tol": cfg.mean_tol, "max_iter": cfg.mean_max_iter}

    if args.protocol == "auc":
        if len(sessions) != 1:
            raise ConfigError("protocol 'auc' takes exactly one archive")
        trials, meta, path = sessions[0]
        if args.model:
            model, _ = _read_model(args.model)
            _check_dims(model, meta, path)
            value = evaluation.auc(classifier.score_many(model, trials), [t.label for t in trials])
        else:
            train, test = _split_repetitions(trials, cfg)
            value = evaluation.canonical_auc(train, test, est, **mean_kw)
        report = EvaluationReport("auc", [CurvePoint(0.0, value, 0.0, 1)], auc=value)
    elif args.protocol == "learning-curve":
        if not sessions:
            raise ConfigError("protocol 'learning-curve' needs at least one archive")
        try:
            report = evaluation.learning_curve(
                [s[0] for s in sessions],
                cfg.sizes(),
                train_fraction=cfg.train_fraction,
                trials_per_repetition=cfg.trials_per_repetition,
                cfg=est,
            )
        except ClassCoverageError:
            raise
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    elif args.protocol in ("latency-sweep", "jitter-sweep"):
        model, rec = _sweep_inputs(args, cfg)
        kind = args.protocol.split("-")[0]
        grid = cfg.sweep_grid()
        if kind == "jitter":
            grid = [g for g in grid if g >= 0]
        report = evaluation.robustness_sweep(
            model, rec, grid, kind, window_s=cfg.window_s, seed=cfg.seed, n_draws=cfg.jitter_draws
        )
    else:
        if len(sessions) < 2:
            raise ConfigError("protocol 'cross-subject' needs at least two subject archives")
        report = evaluation.cross_subject_eval([s[0] for s in sessions], est)
    _emit(report, args.output)
    return EXIT_OK


def cmd_adapt_replay(args) -> int:
    cfg = _run_config(args)
    generic, _ = _read_model(args.model)
    trials, meta = _read_archive(args.archive)
    _check_dims(generic, meta, args.archive)
    schedule = Schedule[cfg.schedule.upper()]
    report, state = evaluation.adaptive_replay(
        generic, trials, schedule, n_full=cfg.n_full, alpha=cfg.alpha, n_blocks=cfg.n_blocks, consolidate=True
    )
    final = classifier.current_model(state)
    fileformats.write_model(args.output, final, schedule=schedule, n_full=cfg.n_full, alpha=state.alpha)
    _emit(report, args.report)
    return EXIT_OK


def cmd_synth(args) -> int:
    scfg = config.build(SynthConfig, args.config, _overrides(args, SynthConfig))
    rec = evaluation.generate_recording(scfg)
    if args.recording_out:
        fileformats.write_recording(args.recording_out, rec)
    if args.triggers_out:
        fileformats.write_triggers(args.triggers_out, rec.triggers)
    trials = epoch(rec, scfg.window_s)
    n = int(round(scfg.window_s * scfg.sample_rate))
    fileformats.write_archive(args.output, trials, sample_rate=scfg.sample_rate, shape=(scfg.channels, n))
    n_t, n_nt = _counts(trials)
    print(f"trials: {len(trials)} (target {n_t}, nontarget {n_nt}), seed {scfg.seed}")
    return EXIT_OK


# --- entry point ------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="erpgeom",
        description="Riemannian MDM classification of ERP super-trial covariances.",
    )
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("preprocess", help="filter, decimate and epoch a continuous recording")
    p.add_argument("recording", help="continuous recording (ERPR1 binary)")
    p.add_argument("triggers", help="trigger text file: '<sample> <target|nontarget>' per line")
    p.add_argument("-o", "--output", required=True, help="epoch archive to write")
    _add_config_flags(p, RunConfig)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("train", help="train an MDM model from an epoch archive")
    p.add_argument("archive")
    p.add_argument("-o", "--output", required=True, help="model file to write")
    _add_config_flags(p, RunConfig)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score every trial of an archive")
    p.add_argument("model")
    p.add_argument("archive")
    p.add_argument("-o", "--output", help="score table path (default: stdout)")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("evaluate", help=f"run a protocol: {', '.join(PROTOCOLS)}")
    p.add_argument("protocol", help=" | ".join(PROTOCOLS))
    p.add_argument("archives", nargs="*", help="epoch archive(s); one per subject or session")
    p.add_argument("--model", help="fixed model to evaluate instead of training one")
    p.add_argument("--recording", help="continuous recording for the sweeps")
    p.add_argument("--triggers", help="trigger file for the sweeps")
    p.add_argument("-o", "--output", help="report path, JSON lines (default: stdout)")
    _add_config_flags(p, RunConfig)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("adapt-replay", help="replay a session through the adaptive classifier")
    p.add_argument("model", help="generic model")
    p.add_argument("archive", help="session archive, trials in chronological order")
    p.add_argument("-o", "--output", required=True, help="final blended model to write")
    p.add_argument("--report", help="per-block AUC report, JSON lines (default: stdout)")
    _add_config_flags(p, RunConfig)
    p.set_defaults(func=cmd_adapt_replay)

    p = sub.add_parser("synth", help="generate a synthetic session archive")
    p.add_argument("-o", "--output", required=True, help="epoch archive to write")
    p.add_argument("--recording-out", help="also write the continuous recording (ERPR1)")
    p.add_argument("--triggers-out", help="also write the trigger file")
    _add_config_flags(p, SynthConfig)
    p.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except UnknownProtocol as exc:
        print(f"erpgeom: unknown protocol {exc.args[0]!r}; valid: {', '.join(PROTOCOLS)}", file=sys.stderr)
        return EXIT_PROTOCOL
    except FormatError as exc:
        print(f"erpgeom: input format error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except ClassCoverageError as exc:
        print(f"erpgeom: class coverage error: {exc}", file=sys.stderr)
        return EXIT_COVERAGE
    except DimensionMismatchError as exc:
        print(f"erpgeom: dimension mismatch: {exc}", file=sys.stderr)
        return EXIT_DIMENSION
    except ConfigError as exc:
        print(f"erpgeom: invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, NotPositiveDefiniteError, SymmetryError) as exc:
        print(f"erpgeom: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
