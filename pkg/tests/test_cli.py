import hashlib
import os
import shlex
import subprocess
import sys

import numpy as np
import pytest

from conftest import sine_clip
from serkit.audio_io import write_wav
from serkit.cli import build_parser, main
from serkit.dataset import EmotionLabel, ManifestEntry, read_manifest, write_manifest
from serkit.features import load_features
from serkit.figures import read_pgm


def run(*argv):
    return main([str(a) for a in argv])


def sha(path):
    return hashlib.sha256(path.read_bytes()).hexdigest()


def test_synth_counts_and_rerun_checksum(tmp_path):
    assert run("--quiet", "synth", "--per-class", 40, "--out", tmp_path / "a") == 0
    wavs = list((tmp_path / "a").glob("*.wav"))
    assert len(wavs) == 320
    assert len(read_manifest(tmp_path / "a" / "manifest.csv")) == 320
    assert run("--quiet", "synth", "--per-class", 40, "--out", tmp_path / "b") == 0
    assert sha(tmp_path / "a" / "manifest.csv") == sha(tmp_path / "b" / "manifest.csv")
    assert sha(tmp_path / "a" / "angry_0007.wav") == sha(tmp_path / "b" / "angry_0007.wav")


def test_per_class_zero_is_a_usage_error(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run("synth", "--per-class", 0, "--out", tmp_path)
    assert exc.value.code == 2


def test_global_flags_in_either_position(tmp_path):
    assert run("--quiet", "--seed", 3, "synth", "--per-class", 1, "--out", tmp_path / "a") == 0
    assert run("synth", "--per-class", 1, "--seed", 3, "--quiet", "--out", tmp_path / "b") == 0
    assert sha(tmp_path / "a" / "happy_0000.wav") == sha(tmp_path / "b" / "happy_0000.wav")


def test_env_seed_changes_default(tmp_path, monkeypatch):
    run("--quiet", "synth", "--per-class", 1, "--out", tmp_path / "a")
    monkeypatch.setenv("SERKIT_SEED", "99")
    run("--quiet", "synth", "--per-class", 1, "--out", tmp_path / "b")
    run("--quiet", "synth", "--per-class", 1, "--seed", 99, "--out", tmp_path / "c")
    assert sha(tmp_path / "a" / "sad_0000.wav") != sha(tmp_path / "b" / "sad_0000.wav")
    assert sha(tmp_path / "b" / "sad_0000.wav") == sha(tmp_path / "c" / "sad_0000.wav")


def test_resolved_config_reruns_identically(tmp_path):
    run("--quiet", "synth", "--per-class", 2, "--seed", 5, "--out", tmp_path / "a")
    lines = (tmp_path / "a" / "cli_config.txt").read_text().splitlines()
    config = dict(line.split("=", 1) for line in lines)
    assert config["seed"] == "5" and config["per_class"] == "2"
    argv = shlex.split(config["argv"])
    argv[argv.index("--out") + 1] = str(tmp_path / "b")
    assert main(argv) == 0
    assert sha(tmp_path / "a" / "fearful_0001.wav") == sha(tmp_path / "b" / "fearful_0001.wav")


def _three_second_manifest(tmp_path, missing=False):
    write_wav(tmp_path / "tone.wav", sine_clip(440.0, seconds=3.0))
    entries = [ManifestEntry(str(tmp_path / "tone.wav"), EmotionLabel.HAPPY, "01", split="train")]
    if missing:
        entries.insert(0, ManifestEntry(str(tmp_path / "gone.wav"), EmotionLabel.SAD, "01", split="train"))
    write_manifest(tmp_path / "manifest.csv", entries)
    return tmp_path / "manifest.csv"


def test_features_logmel_dims(tmp_path):
    manifest = _three_second_manifest(tmp_path)
    assert run("--quiet", "features", "--manifest", manifest, "--out", tmp_path / "f") == 0
    X, y = load_features(read_manifest(manifest), tmp_path / "f")
    assert X[0].shape == (188, 128)
    assert list(y) == [int(EmotionLabel.HAPPY)]


def test_features_mfcc_dims(tmp_path):
    manifest = _three_second_manifest(tmp_path)
    assert run("--quiet", "features", "--kind", "mfcc", "--manifest", manifest, "--out", tmp_path / "f") == 0
    X, _ = load_features(read_manifest(manifest), tmp_path / "f")
    assert X[0].shape[1] == 20


def test_features_missing_file_fails_but_others_processed(tmp_path, capsys):
    manifest = _three_second_manifest(tmp_path, missing=True)
    assert run("--quiet", "features", "--manifest", manifest, "--out", tmp_path / "f") != 0
    assert "FeatureExtractionError" in capsys.readouterr().err
    X, _ = load_features(read_manifest(manifest)[1:], tmp_path / "f")
    assert X[0].shape == (188, 128)


def test_train_and_eval_svm(tiny_corpus, tmp_path):
    manifest, feats = tiny_corpus / "manifest.csv", tiny_corpus / "mfcc"
    assert run("--quiet", "train", "--model", "svm", "--manifest", manifest, "--features", feats,
               "--out", tmp_path / "run") == 0
    assert (tmp_path / "run" / "best.ckpt").is_file()
    assert run("--quiet", "eval", "--ckpt", tmp_path / "run" / "best.ckpt", "--split", "val",
               "--manifest", manifest, "--features", feats, "--out", tmp_path / "ev") == 0
    text = (tmp_path / "ev" / "metrics.csv").read_text()
    assert text.startswith("label,precision,recall,f1,support,accuracy")
    assert (tmp_path / "ev" / "confusion.csv").is_file()


def test_dump_spectrogram_pgm(tmp_path):
    write_wav(tmp_path / "clip.wav", sine_clip(1000.0))
    assert run("--quiet", "dump", "--spec", tmp_path / "clip.wav", "--pgm", tmp_path / "s.pgm",
               "--out", tmp_path) == 0
    data = (tmp_path / "s.pgm").read_bytes()
    assert data[:2] == b"P5"
    img = read_pgm(tmp_path / "s.pgm")
    assert img.shape == (128, 63)
    # the tone sits in the lower half of the image (low frequencies at the bottom)
    assert np.argmax(img.mean(axis=1)) > 64


def test_dump_waveform_csv(tmp_path):
    write_wav(tmp_path / "clip.wav", sine_clip(200.0, seconds=0.01))
    assert run("--quiet", "dump", "--wav", tmp_path / "clip.wav", "--csv", tmp_path / "w.csv",
               "--out", tmp_path) == 0
    rows = (tmp_path / "w.csv").read_text().splitlines()
    assert rows[0] == "time_s,amplitude" and len(rows) == 161


def test_dump_needs_an_output(tmp_path):
    with pytest.raises(SystemExit) as exc:
        run("dump", "--spec", "x.wav", "--out", tmp_path)
    assert exc.value.code == 2


def test_augment_preview(tmp_path):
    write_wav(tmp_path / "clip.wav", sine_clip(500.0))
    assert run("--quiet", "augment-preview", "--input", tmp_path / "clip.wav", "--n", 2, "--size", 64,
               "--out", tmp_path / "p") == 0
    names = sorted(p.name for p in (tmp_path / "p").glob("*.pgm"))
    assert names == ["augmented_00.pgm", "augmented_01.pgm", "original.pgm"]
    assert read_pgm(tmp_path / "p" / "original.pgm").shape == (64, 64)


def test_runtime_error_exit_code(tmp_path, capsys):
    assert run("--quiet", "eval", "--ckpt", tmp_path / "none.ckpt", "--manifest", tmp_path / "m.csv",
               "--features", tmp_path, "--out", tmp_path) == 1
    assert "Error" in capsys.readouterr().err


def test_malformed_checkpoint_names_error_class(tmp_path, capsys):
    (tmp_path / "bad.ckpt").write_bytes(b"not a container")
    assert run("--quiet", "eval", "--ckpt", tmp_path / "bad.ckpt", "--manifest", tmp_path / "m.csv",
               "--features", tmp_path, "--out", tmp_path) == 1
    assert capsys.readouterr().err.startswith("MalformedContainer:")


SUBCOMMANDS = ("synth", "manifest", "split", "features", "augment-preview", "train", "eval", "dump")


@pytest.mark.parametrize("name", SUBCOMMANDS)
def test_help_lists_defaults(name, capsys):
    with pytest.raises(SystemExit) as exc:
        build_parser().parse_args([name, "--help"])
    assert exc.value.code == 0
    out = capsys.readouterr().out
    for flag in ("--seed", "--out", "--quiet"):
        assert flag in out
    assert "(default: 42)" in out or "SERKIT_SEED" in out
    assert "(default: serkit_out)" in out


def test_module_entry_point(tmp_path):
    env = dict(os.environ, SERKIT_SEED="1")
    proc = subprocess.run([sys.executable, "-m", "serkit.cli", "synth", "--per-class", "-1"],
                          capture_output=True, text=True, env=env, cwd=tmp_path)
    assert proc.returncode == 2
    assert "usage" in proc.stderr
