"""Feature-store on disk: one SERT file per manifest entry plus ``index.csv``."""

from __future__ import annotations

import csv
import logging
import os
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .audio_io import DEFAULT_SAMPLE_RATE, decode_wav, resample
from .dsp import MelConfig, StftConfig, log_mel_spectrogram, mfcc
from .errors import SerkitError
from .tensorio import load_tensor, save_tensor

log = logging.getLogger(__name__)

INDEX_NAME = "index.csv"
INDEX_FIELDS = ("hash", "file", "path", "label", "kind", "frames", "dims")


def compute_features(path, kind="logmel", n_mels=128, n_mfcc=20, sample_rate_hz=DEFAULT_SAMPLE_RATE,
                     frame_len=1024, hop_len=256) -> np.ndarray:
    clip = decode_wav(path)
    if clip.sample_rate_hz != sample_rate_hz:
        clip = resample(clip, sample_rate_hz)
    stft_cfg = StftConfig(frame_len, hop_len)
    mel_cfg = MelConfig(n_mels)
    if kind == "logmel":
        return log_mel_spectrogram(clip, stft_cfg, mel_cfg)
    if kind == "mfcc":
        return mfcc(clip, stft_cfg, mel_cfg, n_mfcc)
    raise ValueError(f"unknown feature kind {kind!r}")


def _work(args):
    entry_path, out_file, kwargs = args
    try:
        feats = compute_features(entry_path, **kwargs)
        save_tensor(out_file, feats)
        return feats.shape, None
    except (OSError, SerkitError, ValueError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def extract_features(entries, out_dir, kind="logmel", jobs=1, **kwargs):
    """Compute features for every entry; returns ``(n_ok, failures)``.

    Failures (missing or undecodable audio) are logged and skipped so the
    remaining files are still processed.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    kwargs = dict(kwargs, kind=kind)
    tasks = [(e.path, str(out_dir / f"{e.row_hash()}.sert"), kwargs) for e in entries]
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_work, tasks, chunksize=8))
    else:
        results = [_work(t) for t in tasks]
    failures = []
    rows = []
    for e, (shape, err) in zip(entries, results):
        if err is not None:
            log.error("%s: %s", e.path, err)
            failures.append((e.path, err))
            continue
        rows.append([e.row_hash(), f"{e.row_hash()}.sert", Path(e.path).name, e.label.label_name,
                     kind, shape[0], shape[1]])
    with open(out_dir / INDEX_NAME, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(INDEX_FIELDS)
        writer.writerows(rows)
    return len(rows), failures


def read_index(features_dir) -> dict[str, dict]:
    with open(Path(features_dir) / INDEX_NAME, encoding="utf-8", newline="") as fh:
        return {row["hash"]: row for row in csv.DictReader(fh)}


def feature_kind(features_dir) -> str:
    kinds = {row["kind"] for row in read_index(features_dir).values()}
    if len(kinds) != 1:
        raise ValueError(f"{features_dir}: expected a single feature kind, found {sorted(kinds)}")
    return kinds.pop()


def load_features(entries, features_dir):
    """Arrays and label codes for ``entries``, in order."""
    features_dir = Path(features_dir)
    index = read_index(features_dir)
    X, y = [], []
    for e in entries:
        row = index.get(e.row_hash())
        if row is None:
            raise FileNotFoundError(f"no features for {e.path} in {features_dir}")
        X.append(load_tensor(features_dir / row["file"]).astype(np.float64))
        y.append(int(e.label))
    return X, np.asarray(y, dtype=np.intp)


def default_jobs() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else (os.cpu_count() or 1)
