"""Command-line entry point: ``saccadeconv <subcommand> [options]``.

Exit codes: 0 success, 1 some images failed to convert, 2 usage or path
error, 3 no data to work on.

Any option can also come from a ``--config`` file of ``key = value``
lines (``#`` starts a comment); keys are option names without the
leading dashes. Command-line flags take precedence.
"""

from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from pathlib import Path

from . import __version__, analysis, hfirst, knn, pipeline, skim
from .events import EventFormatError, load_stream
from .sim import NoiseConfig

log = logging.getLogger("saccadeconv")

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_EMPTY = 0, 1, 2, 3


class CliError(Exception):
    def __init__(self, message: str, code: int = EXIT_USAGE):
        super().__init__(message)
        self.code = code


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {text}")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError(f"expected a positive number, got {text}")
    return v


def _nonneg_float(text: str) -> float:
    v = float(text)
    if not v >= 0:
        raise argparse.ArgumentTypeError(f"expected a number >= 0, got {text}")
    return v


def _bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text}")


# --- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="key = value file with default options")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="saccadeconv", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, metavar="command")

    c = sub.add_parser("convert", parents=[common], help="convert an image tree to event recordings")
    c.add_argument("--input", required=True, help="directory of images")
    c.add_argument("--output", required=True, help="output directory (mirrors the input tree)")
    c.add_argument("--profile", default="nmnist", choices=sorted(pipeline.PROFILES))
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--force", action="store_true", help="overwrite existing recordings")
    c.add_argument("--jobs", type=_positive_int, default=os.cpu_count() or 1)
    c.add_argument("--threshold", type=_positive_float, help="contrast threshold (log units)")
    c.add_argument("--step-us", type=_positive_int, help="simulation time step")
    c.add_argument("--pixels-per-degree", type=_positive_float)
    c.add_argument("--background-rate", type=_nonneg_float, help="background events per pixel per second")
    c.add_argument("--threshold-sigma", type=_nonneg_float, help="per-pixel threshold mismatch")
    c.add_argument("--latency-jitter", type=_nonneg_float, help="timestamp jitter std (us)")
    c.add_argument("--no-noise", action="store_true", help="disable all noise sources")
    c.set_defaults(func=cmd_convert)

    s = sub.add_parser("stats", parents=[common], help="per-recording statistics CSV")
    s.add_argument("--input", required=True, help="recording or directory of recordings")
    s.add_argument("--out", default="-", help="CSV path (default stdout)")
    s.add_argument("--summary", help="also write dataset mean/std CSV here")
    s.set_defaults(func=cmd_stats)

    f = sub.add_parser("fft", parents=[common], help="temporal spectrum of a dataset")
    f.add_argument("--input", required=True)
    f.add_argument("--length-exp", type=int, default=22)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--max-hz", type=_positive_float, help="only write frequencies up to this")
    f.add_argument("--out", default="-")
    f.set_defaults(func=cmd_fft)

    r = sub.add_parser("rates", parents=[common], help="mean/std event-rate profile")
    r.add_argument("--input", required=True)
    r.add_argument("--bin-ms", type=_positive_float, default=1.0)
    r.add_argument("--out", default="-")
    r.set_defaults(func=cmd_rates)

    d = sub.add_parser("render", parents=[common], help="render a recording to PPM frames")
    d.add_argument("--input", required=True, help="a .bin recording")
    d.add_argument("--window-ms", type=_positive_float, default=10.0)
    d.add_argument("--out", required=True, help="output directory")
    d.set_defaults(func=cmd_render)

    k = sub.add_parser("classify", parents=[common], help="train and evaluate a classifier")
    k.add_argument("--algo", required=True, help="knn, hfirst or skim")
    k.add_argument("--input", default=".", help="converted dataset (class subdirectories, "
                   "optionally under train/ and test/)")
    k.add_argument("--feature", default="std_y", help=f"kNN features, comma separated: "
                   f"{', '.join(analysis.FEATURE_NAMES)}")
    k.add_argument("--k", type=_positive_int, default=10)
    k.add_argument("--train-per-class", type=_positive_int)
    k.add_argument("--test-per-class", type=_positive_int)
    k.add_argument("--hidden", type=_positive_int, default=500)
    k.add_argument("--seed", type=int, default=0)
    k.add_argument("--out", default="-", help="results CSV (default stdout)")
    k.add_argument("--weights-out", help="save trained weights here (skim: binary matrix, "
                   "hfirst: CSV)")
    k.set_defaults(func=cmd_classify)
    return p


def read_config(path: str) -> dict[str, str]:
    out = {}
    try:
        lines = Path(path).read_text().splitlines()
    except OSError as e:
        raise CliError(f"cannot read config {path}: {e.strerror}") from None
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{n}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        out[key.replace("-", "_")] = value.strip("\"'")
    return out


def parse_args(argv=None) -> argparse.Namespace:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    command = next((a for a in argv if a in _subparser(parser).choices), None)
    if known.config and command is not None:
        _apply_config(_subparser(parser).choices[command], command, known.config)
    return parser.parse_args(argv)


def _subparser(parser: argparse.ArgumentParser) -> argparse._SubParsersAction:
    return next(a for a in parser._actions if isinstance(a, argparse._SubParsersAction))


def _apply_config(sub: argparse.ArgumentParser, command: str, path: str) -> None:
    actions = {a.dest: a for a in sub._actions}
    defaults = {}
    for key, value in read_config(path).items():
        action = actions.get(key)
        if action is None or key in ("config", "help"):
            raise CliError(f"{path}: unknown option {key!r} for {command}")
        conv = _bool if isinstance(action, argparse._StoreTrueAction) else (action.type or str)
        try:
            defaults[key] = conv(value)
        except (argparse.ArgumentTypeError, ValueError) as e:
            raise CliError(f"{path}: bad value for {key}: {e}") from None
        if action.choices is not None and defaults[key] not in action.choices:
            raise CliError(f"{path}: {key} must be one of {sorted(action.choices)}")
        # a required flag may now be satisfied by the file
        action.required = False
    sub.set_defaults(**defaults)


# --- helpers ----------------------------------------------------------------------------

def _open_out(path: str):
    if path == "-":
        return _NoClose(sys.stdout)
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    return open(path, "w", newline="")


class _NoClose:
    def __init__(self, fh):
        self.fh = fh

    def __enter__(self):
        return self.fh

    def __exit__(self, *exc):
        self.fh.flush()


def _require_dir(path: str) -> Path:
    p = Path(path)
    if not p.is_dir():
        raise CliError(f"{path}: no such directory")
    return p


def _load_recordings(path: str) -> list[pipeline.Recording]:
    p = Path(path)
    try:
        if p.is_file():
            return [pipeline.Recording(Path(p.name), p.parent.name, load_stream(p))]
        if p.is_dir():
            recs = pipeline.load_dataset(p)
        else:
            raise CliError(f"{path}: no such file or directory")
    except (EventFormatError, OSError) as e:
        raise CliError(f"{path}: {e}") from None
    if not recs:
        raise CliError(f"{path}: no recordings found", EXIT_EMPTY)
    return recs


# --- commands -------------------------------------------------------------------------

def cmd_convert(args) -> int:
    in_dir = _require_dir(args.input)
    overrides = {}
    if args.threshold is not None:
        overrides["threshold"] = args.threshold
    if args.step_us is not None:
        overrides["step_us"] = args.step_us
    if args.pixels_per_degree is not None:
        overrides["pixels_per_degree"] = args.pixels_per_degree
    base = pipeline.get_profile(args.profile).noise
    if args.no_noise:
        noise = NoiseConfig.off()
    else:
        noise = NoiseConfig(
            background_rate_hz=base.background_rate_hz if args.background_rate is None
            else args.background_rate,
            threshold_sigma=base.threshold_sigma if args.threshold_sigma is None
            else args.threshold_sigma,
            latency_jitter_us=base.latency_jitter_us if args.latency_jitter is None
            else args.latency_jitter,
        )
    profile = pipeline.get_profile(args.profile, noise=noise, **overrides)
    if not pipeline.find_images(in_dir):
        raise CliError(f"{args.input}: no images found", EXIT_EMPTY)
    try:
        report = pipeline.convert_directory(in_dir, args.output, profile, seed=args.seed,
                                           force=args.force, jobs=args.jobs)
    except OSError as e:
        raise CliError(f"{args.output}: {e.strerror or e}") from None
    print(report.summary())
    for entry in report.failures:
        print(f"failed: {entry.path}: {entry.message}", file=sys.stderr)
    return EXIT_FAILED if report.failures else EXIT_OK


def cmd_stats(args) -> int:
    recs = _load_recordings(args.input)
    rows = [(str(r.path), r.label, analysis.compute_features(r.stream)) for r in recs]
    with _open_out(args.out) as fh:
        analysis.write_features_csv(fh, rows)
    if args.summary:
        agg = analysis.aggregate_features([r.stream for r in recs])
        with _open_out(args.summary) as fh:
            w = csv.writer(fh)
            w.writerow(["statistic", "mean", "std"])
            for name, (m, sd) in agg.items():
                w.writerow([name, repr(m), repr(sd)])
    return EXIT_OK


def cmd_fft(args) -> int:
    if args.length_exp < 16 or args.length_exp > 30:
        raise CliError("--length-exp must be between 16 and 30")
    recs = _load_recordings(args.input)
    streams = [r.stream for r in recs]
    if sum(len(s) for s in streams) == 0:
        raise CliError(f"{args.input}: recordings contain no events", EXIT_EMPTY)
    spec = analysis.temporal_spectrum(streams, args.length_exp, args.seed)
    with _open_out(args.out) as fh:
        analysis.write_spectrum_csv(fh, spec, args.max_hz)
    return EXIT_OK


def cmd_rates(args) -> int:
    recs = _load_recordings(args.input)
    bin_us = int(round(args.bin_ms * 1000))
    if bin_us <= 0:
        raise CliError("--bin-ms is below 1 us")
    try:
        prof = analysis.rate_profile([r.stream for r in recs], bin_us)
    except ValueError as e:
        raise CliError(str(e)) from None
    with _open_out(args.out) as fh:
        analysis.write_rate_csv(fh, prof)
    return EXIT_OK


def cmd_render(args) -> int:
    p = Path(args.input)
    if not p.is_file():
        raise CliError(f"{args.input}: no such file")
    try:
        s = load_stream(p)
    except (EventFormatError, OSError) as e:
        raise CliError(f"{args.input}: {e}") from None
    window = int(round(args.window_ms * 1000))
    if window <= 0:
        raise CliError("--window-ms is below 1 us")
    if s.duration <= 0:
        raise CliError(f"{args.input}: empty recording", EXIT_EMPTY)
    paths = analysis.save_frames(analysis.render_frames(s, window), args.out, p.stem)
    print(f"wrote {len(paths)} frames to {args.out}")
    return EXIT_OK


ALGORITHMS = ("knn", "hfirst", "skim")


def _pick(groups: dict, per_class: int | None, seed: int) -> list:
    if per_class is None:
        return [(item, lab) for lab in sorted(groups, key=str) for item in groups[lab]]
    split = pipeline.split_fixed(groups, per_class, 0, seed)
    for w in split.warnings:
        log.warning(w)
    return split.train


def load_split(path: str, per_train: int | None, per_test: int | None, seed: int):
    """Train/test (stream, label) pairs from a converted dataset.

    A dataset with ``train/`` and ``test/`` subdirectories is used as
    split; otherwise every class is divided into disjoint random subsets
    (half each unless sizes are given).
    """
    root = _require_dir(path)
    if (root / "train").is_dir() and (root / "test").is_dir():
        tr = pipeline.group_by_label(_load_recordings(str(root / "train")))
        te = pipeline.group_by_label(_load_recordings(str(root / "test")))
        train = _pick(tr, per_train, seed)
        test = _pick(te, per_test, seed + 1)
    else:
        groups = pipeline.group_by_label(_load_recordings(path))
        smallest = min(len(v) for v in groups.values())
        n_tr = per_train if per_train is not None else max(1, smallest // 2)
        n_te = per_test if per_test is not None else max(1, smallest - n_tr)
        split = pipeline.split_fixed(groups, n_tr, n_te, seed)
        for w in split.warnings:
            log.warning(w)
        train, test = split.train, split.test
    train = [(r.stream, lab) for r, lab in train]
    test = [(r.stream, lab) for r, lab in test]
    if not train or not test:
        raise CliError(f"{path}: not enough recordings for a train/test split", EXIT_EMPTY)
    return train, test


def _uniform_frame(streams) -> tuple[int, int]:
    sizes = {(s.width, s.height) for s in streams}
    if len(sizes) != 1:
        raise CliError(f"recordings have mixed frame sizes {sorted(sizes)}; "
                       "this classifier needs one size")
    return sizes.pop()


def cmd_classify(args) -> int:
    if args.algo not in ALGORITHMS:
        raise CliError(f"unknown algorithm {args.algo!r}; choose from {', '.join(ALGORITHMS)}")
    train, test = load_split(args.input, args.train_per_class, args.test_per_class, args.seed)
    extra: list[tuple[str, float]] = []
    if args.algo == "knn":
        feats = tuple(f.strip() for f in args.feature.split(","))
        bad = [f for f in feats if f not in analysis.FEATURE_NAMES]
        if bad:
            raise CliError(f"unknown feature(s) {bad}; choose from {analysis.FEATURE_NAMES}")
        model = knn.KnnModel.fit([analysis.compute_features(s) for s, _ in train],
                                 [lab for _, lab in train], feats, args.k)
        if not model.labels:
            raise CliError("no training recording has defined features", EXIT_EMPTY)
        result = knn.evaluate(model, [(analysis.compute_features(s), lab) for s, lab in test])
    elif args.algo == "hfirst":
        w, h = _uniform_frame([s for s, _ in train + test])
        net = hfirst.HfirstNetwork(width=w, height=h)
        try:
            hfirst.train_s2(net, train)
        except ValueError as e:
            raise CliError(str(e), EXIT_EMPTY) from None
        res = hfirst.evaluate_hfirst(net, test)
        result = res.hard
        extra.append(("balanced_soft", res.soft.balanced_accuracy))
        if args.weights_out:
            hfirst.write_kernels_csv(args.weights_out, net)
    else:
        w, h = _uniform_frame([s for s, _ in train + test])
        n_classes = len({lab for _, lab in train})
        longest = max(s.duration for s, _ in train + test)
        cfg = skim.SkimConfig(hidden=args.hidden, seed=args.seed,
                              max_duration_ms=max(skim.MAX_DURATION_MS, -(-longest // 1000)))
        net = skim.SkimNetwork(w, h, n_classes, cfg)
        skim.train(net, train)
        result = skim.evaluate_skim(net, test)
        if args.weights_out:
            net.save_weights(args.weights_out)
    with _open_out(args.out) as fh:
        wr = csv.writer(fh)
        wr.writerow(["class", "accuracy"])
        for lab, acc in result.rows():
            wr.writerow([lab, repr(acc)])
        wr.writerow(["balanced", repr(result.balanced_accuracy)])
        for name, v in extra:
            wr.writerow([name, repr(v)])
    return EXIT_OK


def main(argv=None) -> int:
    try:
        args = parse_args(argv)
    except CliError as e:
        print(f"saccadeconv: error: {e}", file=sys.stderr)
        return e.code
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except CliError as e:
        print(f"saccadeconv: error: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
