import numpy as np
import pytest

from serkit.audio_io import AudioClip


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def sine_clip(freq_hz, seconds=1.0, sr=16000, amp=0.5):
    t = np.arange(int(round(seconds * sr))) / sr
    return AudioClip(amp * np.sin(2 * np.pi * freq_hz * t), sr)


@pytest.fixture(scope="session")
def tiny_corpus(tmp_path_factory):
    """2 clips per class, split and featurised, shared by the pipeline tests."""
    from serkit.dataset import SplitSpec, generate_synthetic_corpus, stratified_split, write_manifest
    from serkit.features import extract_features

    root = tmp_path_factory.mktemp("tiny")
    entries = generate_synthetic_corpus(root / "corpus", 4, seed=7)
    split = stratified_split(entries, SplitSpec(0.5, 0.25, 0.25, seed=7))
    write_manifest(root / "manifest.csv", split)
    extract_features(split, root / "logmel", kind="logmel")
    extract_features(split, root / "mfcc", kind="mfcc")
    return root


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_RESULTS = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_RESULTS:
            terminalreporter.write_line(line)
