"""``serkit`` command line: synth, manifest, split, features, augment-preview, train, eval, dump.

Exit codes: 0 on success, 1 on runtime errors (the error class name goes to
stderr), 2 on usage errors.
"""

from __future__ import annotations

import argparse
import logging
import os
import shlex
import sys
from pathlib import Path

import numpy as np

from .errors import SerkitError

log = logging.getLogger("serkit")

CONFIG_NAME = "cli_config.txt"
DEFAULT_SEED = 42


def _default_seed() -> int:
    raw = os.environ.get("SERKIT_SEED")
    if raw is None:
        return DEFAULT_SEED
    try:
        return int(raw)
    except ValueError:
        return DEFAULT_SEED


def _positive_int(text):
    value = int(text)
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected an integer >= 1, got {text}")
    return value


def _seed(text):
    value = int(text)
    if not 0 <= value < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def _fraction(text):
    value = float(text)
    if not 0.0 <= value < 1.0:
        raise argparse.ArgumentTypeError(f"expected a fraction in [0, 1), got {text}")
    return value


def _sizes(text):
    try:
        return tuple(int(s) for s in text.split(",") if s.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated sizes, got {text!r}") from None


def write_resolved_config(out_dir, args, argv) -> Path:
    """Every resolved option as ``key=value`` plus the argv that reproduces the run."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    lines = [f"command={args.command}"]
    for key, value in sorted(vars(args).items()):
        if key in ("command", "func"):
            continue
        lines.append(f"{key}={value}")
    lines.append("argv=" + shlex.join(argv))
    path = out / CONFIG_NAME
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


# -- commands ----------------------------------------------------------------

def cmd_synth(args):
    from .dataset import generate_synthetic_corpus

    entries = generate_synthetic_corpus(args.out, args.per_class, seed=args.seed,
                                        sample_rate_hz=args.sample_rate)
    log.info("wrote %d clips and manifest.csv to %s", len(entries), args.out)
    return 0


def cmd_manifest(args):
    from .dataset import class_histogram, scan_corpus, write_histogram_csv, write_manifest

    entries = []
    for spec in args.corpus:
        corpus, _, root = spec.partition("=")
        if not root:
            raise SerkitError(f"--corpus expects NAME=DIR, got {spec!r}")
        entries.extend(scan_corpus(root, corpus))
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out / "manifest.csv", entries)
    write_histogram_csv(out / "histogram.csv", class_histogram(entries))
    log.info("manifest with %d entries written to %s", len(entries), out)
    return 0


def cmd_split(args):
    from .dataset import (
        SplitSpec,
        actor_split,
        class_histogram,
        read_manifest,
        select_split,
        stratified_split,
        write_histogram_csv,
        write_manifest,
    )

    entries = read_manifest(args.manifest)
    spec = SplitSpec(1.0 - args.val_frac - args.test_frac, args.val_frac, args.test_frac, seed=args.seed)
    split = stratified_split(entries, spec) if args.split_mode == "random" else actor_split(entries, spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_manifest(out / "manifest.csv", split, comment=f"split mode={args.split_mode} seed={args.seed}")
    for name in ("train", "val", "test"):
        part = select_split(split, name)
        write_histogram_csv(out / f"histogram_{name}.csv", class_histogram(part))
        log.info("%s: %d entries", name, len(part))
    return 0


def cmd_features(args):
    from .dataset import read_manifest
    from .features import default_jobs, extract_features

    entries = read_manifest(args.manifest)
    jobs = args.jobs or default_jobs()
    n_ok, failures = extract_features(entries, args.out, kind=args.kind, jobs=jobs, n_mels=args.mels,
                                      n_mfcc=args.mfcc, frame_len=args.frame_len, hop_len=args.hop_len)
    log.info("extracted %d feature files into %s", n_ok, args.out)
    if failures:
        print(f"FeatureExtractionError: {len(failures)} of {len(entries)} files failed", file=sys.stderr)
        return 1
    return 0


def _load_spectrogram(path, kind="logmel", n_mels=128):
    from .features import compute_features
    from .tensorio import load_tensor

    if str(path).endswith(".sert"):
        return load_tensor(path).astype(np.float64)
    return compute_features(path, kind=kind, n_mels=n_mels)


def cmd_augment_preview(args):
    from .augment import ImageAugConfig, augment_image, to_model_square
    from .figures import write_pgm

    spec = _load_spectrogram(args.input, n_mels=args.mels)
    img = to_model_square(spec, args.size)
    cfg = ImageAugConfig(args.max_rotate, (1.0, args.max_zoom), args.brightness)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    # to_model_square puts mel bands on rows, low bands first; flip so low frequencies sit at the bottom
    write_pgm(out / "original.pgm", img[::-1])
    for i in range(args.n):
        aug = augment_image(img, cfg, np.random.default_rng([args.seed, i]))
        write_pgm(out / f"augmented_{i:02d}.pgm", aug[::-1])
    log.info("wrote %d previews to %s", args.n, out)
    return 0


def cmd_train(args):
    from .augment import ImageAugConfig, ResizePolicy
    from .train import TrainConfig, train_model

    epochs = args.epochs if args.epochs is not None else (200 if args.model == "lstm" else 30)
    cfg = TrainConfig(epochs=epochs, batch_size=args.batch_size, lr=args.lr, lr_decay=args.lr_decay,
                      mixup_enabled=args.mixup, mixup_alpha=args.mixup_alpha, aug_enabled=args.augment,
                      aug=ImageAugConfig(args.max_rotate, (1.0, args.max_zoom), args.brightness),
                      resize_policy=ResizePolicy(args.stage_sizes), seed=args.seed)
    params = {}
    if args.model == "svm":
        params = {"C": args.svm_c}
    if args.model in ("cnn_lite", "cnn34") and args.base_width is not None:
        params["base_width"] = args.base_width
    if args.pretrained and args.model not in ("cnn_lite", "cnn34"):
        raise SerkitError("--pretrained applies to CNN models only")
    model, logs = train_model(args.model, args.manifest, args.features, cfg, out_dir=args.out,
                              pretrained=args.pretrained, **params)
    if logs:
        best = max(e.val_accuracy for e in logs)
        log.info("trained %s for %d epochs; best val accuracy %.4f", args.model, len(logs), best)
    else:
        log.info("trained %s", args.model)
    return 0


def cmd_eval(args):
    from .eval import emit_report, evaluate_split
    from .models import load_model

    model = load_model(args.ckpt)
    report = evaluate_split(model, args.manifest, args.features, args.split)
    emit_report(report, args.out)
    log.info("%s split: accuracy %.4f, macro F1 %.4f on %d examples", args.split, report.accuracy,
             report.macro_f1, report.n_examples)
    return 0


def cmd_dump(args):
    from .audio_io import decode_wav
    from .figures import spectrogram_image, write_matrix_csv, write_pgm, write_waveform_csv

    if args.wav:
        clip = decode_wav(args.wav)
        if args.pgm:
            raise SerkitError("a waveform dumps to --csv only")
        write_waveform_csv(args.csv, clip)
        return 0
    spec = _load_spectrogram(args.spec, args.kind, args.mels)
    if args.pgm:
        write_pgm(args.pgm, spectrogram_image(spec))
    if args.csv:
        write_matrix_csv(args.csv, spec)
    return 0


# -- parser ----------------------------------------------------------------

def _add_global_flags(parser, suppress):
    """Global flags. With ``suppress`` the defaults are shown in the help text but not applied,
    so values given before the subcommand survive."""
    def flag(*names, default, help, **kw):
        if suppress:
            parser.add_argument(*names, default=argparse.SUPPRESS, help=f"{help} (default: {default})", **kw)
        else:
            parser.add_argument(*names, default=default, help=help, **kw)

    flag("--seed", type=_seed, default=_default_seed(),
         help="seed for every random draw; env SERKIT_SEED overrides the default")
    flag("--out", default="serkit_out", help="output directory")
    flag("--quiet", action="store_true", default=False, help="only print warnings and errors")


def build_parser() -> argparse.ArgumentParser:
    fmt = argparse.ArgumentDefaultsHelpFormatter
    parser = argparse.ArgumentParser(prog="serkit", description="Speech emotion recognition toolkit.",
                                     formatter_class=fmt)
    _add_global_flags(parser, suppress=False)
    common = argparse.ArgumentParser(add_help=False)
    _add_global_flags(common, suppress=True)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, func, help_text):
        p = sub.add_parser(name, parents=[common], help=help_text, description=help_text, formatter_class=fmt)
        p.set_defaults(func=func)
        return p

    p = add("synth", cmd_synth, "generate a synthetic labelled corpus")
    p.add_argument("--per-class", type=_positive_int, default=40, help="clips per emotion")
    p.add_argument("--sample-rate", type=_positive_int, default=16000, help="sample rate in Hz")

    p = add("manifest", cmd_manifest, "scan corpus directories into a manifest")
    p.add_argument("--corpus", action="append", required=True, metavar="NAME=DIR",
                   help="corpus name (ravdess or savee) and its root; repeatable")

    p = add("split", cmd_split, "assign train/val/test splits")
    p.add_argument("--manifest", required=True, help="input manifest.csv")
    p.add_argument("--split-mode", choices=("random", "by-actor"), default="random",
                   help="stratified random split or speaker-disjoint split")
    p.add_argument("--val-frac", type=_fraction, default=0.05, help="validation share")
    p.add_argument("--test-frac", type=_fraction, default=0.05, help="test share")

    p = add("features", cmd_features, "extract log-mel or MFCC features")
    p.add_argument("--manifest", required=True, help="input manifest.csv")
    p.add_argument("--kind", choices=("logmel", "mfcc"), default="logmel", help="feature type")
    p.add_argument("--mels", type=_positive_int, default=128, help="mel bands")
    p.add_argument("--mfcc", type=_positive_int, default=20, help="MFCC coefficients (mfcc kind)")
    p.add_argument("--frame-len", type=_positive_int, default=1024, help="STFT frame length")
    p.add_argument("--hop-len", type=_positive_int, default=256, help="STFT hop length")
    p.add_argument("--jobs", type=int, default=0, help="worker processes (0 = available parallelism)")

    p = add("augment-preview", cmd_augment_preview, "render augmented spectrograms as PGM images")
    p.add_argument("--input", required=True, help="WAV file or .sert log-mel tensor")
    p.add_argument("--n", type=_positive_int, default=4, help="number of augmented samples")
    p.add_argument("--size", type=_positive_int, default=128, help="square image size")
    p.add_argument("--mels", type=_positive_int, default=128, help="mel bands when reading a WAV")
    p.add_argument("--max-rotate", type=float, default=4.0, help="maximum rotation in degrees")
    p.add_argument("--max-zoom", type=float, default=1.15, help="maximum zoom-in factor")
    p.add_argument("--brightness", type=float, default=0.4, help="maximum brightness shift")

    p = add("train", cmd_train, "train a classifier")
    p.add_argument("--manifest", required=True, help="manifest.csv with splits assigned")
    p.add_argument("--features", required=True, help="feature directory from the features command")
    p.add_argument("--model", choices=("svm", "lstm", "cnn_lite", "cnn34"), default="cnn_lite",
                   help="model family")
    p.add_argument("--epochs", type=int, default=None, help="epochs per stage (default 200 for lstm, else 30)")
    p.add_argument("--batch-size", type=_positive_int, default=64, help="mini-batch size")
    p.add_argument("--lr", type=float, default=0.001, help="initial learning rate")
    p.add_argument("--lr-decay", type=float, default=0.9, help="per-epoch learning-rate multiplier")
    p.add_argument("--mixup", action="store_true", help="enable mixup")
    p.add_argument("--mixup-alpha", type=float, default=0.4, help="Beta(alpha, alpha) parameter for mixup")
    p.add_argument("--augment", action="store_true", help="enable rotation/zoom/brightness augmentation")
    p.add_argument("--max-rotate", type=float, default=4.0, help="maximum rotation in degrees")
    p.add_argument("--max-zoom", type=float, default=1.15, help="maximum zoom-in factor")
    p.add_argument("--brightness", type=float, default=0.4, help="maximum brightness shift")
    p.add_argument("--stage-sizes", type=_sizes, default=(128,),
                   help="comma-separated CNN input sizes for progressive resizing, e.g. 128,256")
    p.add_argument("--base-width", type=_positive_int, default=None,
                   help="CNN stem width (default 16 for cnn_lite, 64 for cnn34)")
    p.add_argument("--svm-c", type=float, default=1.0, help="SVM box constraint C")
    p.add_argument("--pretrained", default=None, help="converted CNN checkpoint to finetune from")

    p = add("eval", cmd_eval, "evaluate a checkpoint on a split")
    p.add_argument("--ckpt", required=True, help="checkpoint file")
    p.add_argument("--manifest", required=True, help="manifest.csv with splits assigned")
    p.add_argument("--features", required=True, help="feature directory")
    p.add_argument("--split", choices=("train", "val", "test"), default="val", help="split to score")

    p = add("dump", cmd_dump, "export a waveform CSV or spectrogram PGM/CSV")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--wav", help="WAV file to dump as a waveform")
    src.add_argument("--spec", help="WAV file (or .sert tensor) to dump as a spectrogram")
    p.add_argument("--pgm", default=None, help="write the spectrogram as a PGM image here")
    p.add_argument("--csv", default=None, help="write CSV here")
    p.add_argument("--kind", choices=("logmel", "mfcc"), default="logmel", help="spectrogram feature type")
    p.add_argument("--mels", type=_positive_int, default=128, help="mel bands")
    return parser


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "dump" and not (args.pgm or args.csv):
        parser.error("dump needs --pgm or --csv")
    if args.command == "split" and args.val_frac + args.test_frac >= 1.0:
        parser.error("--val-frac + --test-frac must be below 1")
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        write_resolved_config(args.out, args, argv)
        return args.func(args)
    except (SerkitError, OSError, ValueError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
