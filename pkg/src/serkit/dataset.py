"""Manifests, corpus filename conventions, stratified splitting and the synthetic corpus."""

from __future__ import annotations

import csv
import enum
import hashlib
import os
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .audio_io import AudioClip, write_wav
from .errors import BadFilename, EmptyManifest, UnknownEmotionCode

MANIFEST_FIELDS = ("path", "label", "actor", "corpus", "split")
CORPORA = ("ravdess", "savee", "synthetic")
SPLITS = ("train", "val", "test", "unassigned")


class EmotionLabel(enum.IntEnum):
    NEUTRAL = 0
    CALM = 1
    HAPPY = 2
    SAD = 3
    ANGRY = 4
    FEARFUL = 5
    DISGUST = 6
    SURPRISED = 7

    @property
    def label_name(self) -> str:
        return self.name.lower()

    @classmethod
    def from_name(cls, name: str) -> "EmotionLabel":
        try:
            return cls[name.strip().upper()]
        except KeyError:
            raise UnknownEmotionCode(f"unknown emotion label {name!r}") from None


N_CLASSES = len(EmotionLabel)
LABEL_NAMES = tuple(lab.label_name for lab in EmotionLabel)


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    label: EmotionLabel
    actor_id: str
    corpus: str = "synthetic"
    split: str = "unassigned"

    def __post_init__(self):
        if not self.path:
            raise ValueError("manifest path must be non-empty")
        object.__setattr__(self, "label", EmotionLabel(self.label))
        if self.corpus not in CORPORA:
            raise ValueError(f"unknown corpus {self.corpus!r}")
        if self.split not in SPLITS:
            raise ValueError(f"unknown split {self.split!r}")

    def row_hash(self) -> str:
        """Stable id for feature files.

        Uses the file's basename rather than its full path, and ignores the
        split, so moving or re-splitting a manifest keeps features addressable.
        """
        key = f"{Path(self.path).name},{self.label.label_name},{self.actor_id},{self.corpus}"
        return hashlib.sha1(key.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class SplitSpec:
    train_frac: float = 0.90
    val_frac: float = 0.05
    test_frac: float = 0.05
    seed: int = 42

    def __post_init__(self):
        fracs = (self.train_frac, self.val_frac, self.test_frac)
        if min(fracs) < 0:
            raise ValueError("split fractions must be non-negative")
        if abs(sum(fracs) - 1.0) > 1e-9:
            raise ValueError(f"split fractions sum to {sum(fracs)}, expected 1")


# -- filename conventions --------------------------------------------------

def read_code_table(path=None, text=None) -> dict[str, EmotionLabel]:
    """Parse ``code=label`` lines; ``#`` starts a comment."""
    if text is None:
        with open(os.fspath(path), encoding="utf-8") as fh:
            text = fh.read()
    table = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        code, sep, label = line.partition("=")
        if not sep or not code.strip():
            raise ValueError(f"line {lineno}: expected code=label, got {raw!r}")
        table[code.strip()] = EmotionLabel.from_name(label)
    return table


def default_code_table(corpus: str) -> dict[str, EmotionLabel]:
    text = resources.files("serkit.data").joinpath(f"{corpus}_codes.cfg").read_text("utf-8")
    return read_code_table(text=text)


def parse_ravdess_filename(name: str, table=None) -> tuple[EmotionLabel, str]:
    """``03-01-05-01-02-01-12.wav`` -> (label from field 3, actor id from field 7)."""
    table = default_code_table("ravdess") if table is None else table
    stem = Path(name).name
    stem = stem.rsplit(".", 1)[0] if "." in stem else stem
    fields = stem.split("-")
    if len(fields) != 7 or not all(re.fullmatch(r"\d\d", f) for f in fields):
        raise BadFilename(f"{name!r} is not 7 dash-separated 2-digit fields")
    code = fields[2]
    if code not in table:
        raise UnknownEmotionCode(f"emotion code {code!r} in {name!r} is not in the code table")
    return table[code], fields[6]


_SAVEE_RE = re.compile(r"^([A-Za-z]+)_([A-Za-z]+)(\d+)$")


def parse_savee_filename(name: str, table=None) -> tuple[EmotionLabel, str]:
    """``DC_su05.wav`` -> (surprised, "DC"); the longest matching prefix wins."""
    table = default_code_table("savee") if table is None else table
    stem = Path(name).name
    stem = stem.rsplit(".", 1)[0] if "." in stem else stem
    m = _SAVEE_RE.match(stem)
    if m is None:
        raise BadFilename(f"{name!r} does not look like ACTOR_<code><nn>")
    actor, letters = m.group(1), m.group(2)
    for code in sorted(table, key=len, reverse=True):
        if letters.startswith(code):
            return table[code], actor
    raise UnknownEmotionCode(f"prefix {letters!r} in {name!r} is not in the code table")


def scan_corpus(root, corpus: str, table=None) -> list[ManifestEntry]:
    """Walk ``root`` for WAV files and label them by filename.

    SAVEE files may be named ``DC_a01.wav`` or live as ``DC/a01.wav``; the
    directory name supplies the actor in the second layout.
    """
    parser = {"ravdess": parse_ravdess_filename, "savee": parse_savee_filename}[corpus]
    table = default_code_table(corpus) if table is None else table
    entries = []
    for path in sorted(Path(root).rglob("*")):
        if path.suffix.lower() != ".wav":
            continue
        name = path.name
        if corpus == "savee" and "_" not in path.stem:
            name = f"{path.parent.name}_{path.name}"
        label, actor = parser(name, table)
        entries.append(ManifestEntry(str(path), label, actor, corpus))
    return entries


# -- manifest CSV ----------------------------------------------------------

def write_manifest(path, entries, comment: str | None = None) -> None:
    """Write a manifest CSV; ``comment`` becomes a leading ``#`` line (e.g. the split seed).

    Absolute audio paths are stored relative to the manifest's directory, so
    a corpus and its manifests can be moved together. Relative paths are
    taken to be relative to that directory already.
    """
    path = Path(path)
    base = path.parent.resolve()
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_FIELDS)
        for e in entries:
            p = Path(e.path)
            if p.is_absolute():
                p = Path(os.path.relpath(p.resolve(), base))
            writer.writerow([p.as_posix(), e.label.label_name, e.actor_id, e.corpus, e.split])


def read_manifest(path, resolve_paths: bool = True) -> list[ManifestEntry]:
    """Read a manifest; relative audio paths resolve against the manifest's directory."""
    path = Path(path)
    base = path.parent.resolve()
    with open(path, encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.DictReader(lines)
    if tuple(reader.fieldnames or ()) != MANIFEST_FIELDS:
        raise ValueError(f"{path}: header must be {','.join(MANIFEST_FIELDS)}")
    entries = []
    for row in reader:
        p = row["path"]
        if resolve_paths and not os.path.isabs(p):
            p = os.path.normpath(base / p)
        entries.append(ManifestEntry(p, EmotionLabel.from_name(row["label"]),
                                     row["actor"], row["corpus"], row["split"]))
    return entries


def read_manifest_comment(path) -> str | None:
    with open(path, encoding="utf-8") as fh:
        first = fh.readline()
    return first[1:].strip() if first.startswith("#") else None


# -- splitting -------------------------------------------------------------

def _round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def stratified_split(entries, spec: SplitSpec = SplitSpec()) -> list[ManifestEntry]:
    """Assign train/val/test per class.

    Each class is shuffled with the seeded generator, then val and test get
    ``round(frac * class_count)`` entries and train keeps the remainder. The
    output preserves the input order.
    """
    entries = list(entries)
    if not entries:
        raise EmptyManifest("cannot split an empty manifest")
    rng = np.random.default_rng(spec.seed)
    by_class = defaultdict(list)
    for i, e in enumerate(entries):
        by_class[e.label].append(i)
    assigned = [None] * len(entries)
    for label in sorted(by_class):
        idx = np.asarray(by_class[label])
        idx = idx[rng.permutation(idx.size)]
        n = idx.size
        n_val = min(n, _round_half_up(spec.val_frac * n))
        n_test = min(n - n_val, _round_half_up(spec.test_frac * n))
        for k, i in enumerate(idx):
            assigned[i] = "val" if k < n_val else "test" if k < n_val + n_test else "train"
    return [replace(e, split=s) for e, s in zip(entries, assigned)]


def actor_split(entries, spec: SplitSpec = SplitSpec()) -> list[ManifestEntry]:
    """Speaker-disjoint split: whole actors are assigned to one split.

    Actors are shuffled with the seeded generator and handed to val, then
    test, until each reaches its target share of entries.
    """
    entries = list(entries)
    if not entries:
        raise EmptyManifest("cannot split an empty manifest")
    counts = Counter((e.corpus, e.actor_id) for e in entries)
    actors = sorted(counts)
    rng = np.random.default_rng(spec.seed)
    order = [actors[i] for i in rng.permutation(len(actors))]
    total = len(entries)
    targets = (("val", spec.val_frac * total), ("test", spec.test_frac * total))
    split_of = {}
    pos = 0
    for split, target in targets:
        taken = 0
        while pos < len(order) - 1 and taken < target - 0.5:
            split_of[order[pos]] = split
            taken += counts[order[pos]]
            pos += 1
    for actor in order[pos:]:
        split_of[actor] = "train"
    return [replace(e, split=split_of[(e.corpus, e.actor_id)]) for e in entries]


def class_histogram(entries) -> dict[EmotionLabel, int]:
    counts = Counter(e.label for e in entries)
    return {lab: counts.get(lab, 0) for lab in EmotionLabel}


def write_histogram_csv(path, histogram) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["label", "count"])
        for lab in EmotionLabel:
            writer.writerow([lab.label_name, histogram.get(lab, 0)])


def select_split(entries, split: str) -> list[ManifestEntry]:
    return [e for e in entries if e.split == split]


# -- corpora ---------------------------------------------------------------

def mock_manifest() -> list[ManifestEntry]:
    """Filenames for the combined RAVDESS speech + SAVEE corpora (1920 clips).

    RAVDESS speech: 24 actors x (neutral x4 + 7 emotions x 8). SAVEE: 4 actors
    x (neutral x30 + 6 emotions x15). No audio is involved; the entries are
    parsed from generated filenames with the default code tables.
    """
    entries = []
    for actor in range(1, 25):
        for emotion in range(1, 9):
            intensities = (1,) if emotion == 1 else (1, 2)
            for intensity in intensities:
                for statement in (1, 2):
                    for rep in (1, 2):
                        name = f"03-01-{emotion:02d}-{intensity:02d}-{statement:02d}-{rep:02d}-{actor:02d}.wav"
                        label, act = parse_ravdess_filename(name)
                        entries.append(ManifestEntry(f"ravdess/Actor_{actor:02d}/{name}", label, act, "ravdess"))
    for actor in ("DC", "JE", "JK", "KL"):
        for code, n in (("a", 15), ("d", 15), ("f", 15), ("h", 15), ("n", 30), ("sa", 15), ("su", 15)):
            for i in range(1, n + 1):
                name = f"{actor}_{code}{i:02d}.wav"
                label, act = parse_savee_filename(name)
                entries.append(ManifestEntry(f"savee/{name}", label, act, "savee"))
    return entries


def synthetic_f0(code: int, sample_rate_hz: int = 16000) -> float:
    """Class pitch, at odd sixteenths of the mel axis up to Nyquist.

    Neighbouring classes sit about 16 bands apart in a 128-band log-mel
    image, wide enough that small rotations and a 15% zoom keep them apart.
    """
    from .dsp import hz_to_mel, mel_to_hz

    return float(mel_to_hz((2 * code + 1) / 16.0 * hz_to_mel(sample_rate_hz / 2.0)))


def synthesize_clip(code: int, rng: np.random.Generator, sample_rate_hz: int = 16000,
                    duration_s: float | None = None) -> AudioClip:
    """One synthetic "emotion" clip: AM sine at a class-specific pitch plus -30 dB noise."""
    if duration_s is None:
        duration_s = rng.uniform(2.0, 4.0)
    n = int(round(duration_s * sample_rate_hz))
    t = np.arange(n) / sample_rate_hz
    phase, mod_phase = rng.uniform(0.0, 2.0 * np.pi, size=2)
    carrier = np.sin(2.0 * np.pi * synthetic_f0(code, sample_rate_hz) * t + phase)
    envelope = 0.5 * (1.0 + 0.8 * np.sin(2.0 * np.pi * (1.0 + code) * t + mod_phase))
    signal = 0.5 * envelope * carrier
    rms = np.sqrt(np.mean(signal ** 2))
    noise = rng.normal(0.0, rms * 10.0 ** (-30.0 / 20.0), size=n)
    return AudioClip(np.clip(signal + noise, -1.0, 1.0), sample_rate_hz)


def generate_synthetic_corpus(out_dir, clips_per_class: int, seed: int = 42,
                              sample_rate_hz: int = 16000) -> list[ManifestEntry]:
    """Write ``8 * clips_per_class`` WAV files plus ``manifest.csv`` into ``out_dir``.

    Every clip draws from its own generator keyed by (seed, class, index), so
    output is identical across runs and independent of generation order.
    """
    if clips_per_class < 1:
        raise ValueError("clips_per_class must be >= 1")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    for lab in EmotionLabel:
        for i in range(clips_per_class):
            rng = np.random.default_rng([seed, int(lab), i])
            clip = synthesize_clip(int(lab), rng, sample_rate_hz)
            name = f"{lab.label_name}_{i:04d}.wav"
            write_wav(out_dir / name, clip)
            entries.append(ManifestEntry(name, lab, f"S{i % 4:02d}", "synthetic"))
    write_manifest(out_dir / "manifest.csv", entries, comment=f"synthetic seed={seed} sample_rate={sample_rate_hz}")
    return [replace(e, path=str(out_dir / e.path)) for e in entries]
