"""Acceptance suite: one test and one PASS/FAIL line per criterion.

The slow criteria (overfitting, the synthetic benchmark and the determinism
rerun) take several minutes; deselect them with ``-m "not slow"``.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE_RESULTS, sine_clip
from oracles import GRADIENT_LAYERS, confusion_by_counting, gradient_instances
from serkit.augment import (
    ImageAugConfig,
    affine_transform,
    augment_image,
    brightness_shift,
    mixup,
    resize_bilinear,
    sample_lambda,
    to_model_square,
)
from serkit.cli import main as cli
from serkit.dataset import (
    SplitSpec,
    class_histogram,
    generate_synthetic_corpus,
    mock_manifest,
    select_split,
    stratified_split,
)
from serkit.dsp import StftConfig, dct2_matrix, fft, stft_power
from serkit.eval import metrics_from_confusion, read_metrics_csv, report_from_predictions
from serkit.features import compute_features
from serkit.models import LSTMClassifier, RBFSVMClassifier, ResNetClassifier, rbf_kernel
from serkit.nn import check_module_gradients, numerical_gradient, one_hot, relative_error, softmax_cross_entropy
from serkit.train import read_epochs_csv


def verdict(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    print(line)
    ACCEPTANCE_RESULTS.append(line)
    assert ok, line


def naive_dft(x):
    n = x.shape[-1]
    k = np.arange(n)
    return x @ np.exp(-2j * np.pi * np.outer(k, k) / n).T


def test_dsp_oracle_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(0)
    fft_err = parseval_err = 0.0
    for i in range(200):
        n = 2 ** int(rng.integers(3, 11))
        x = rng.normal(size=n)
        X = fft(x)
        ref = naive_dft(x)
        fft_err = max(fft_err, np.max(np.abs(X - ref)) / np.max(np.abs(ref)))
        energy = np.sum(x ** 2)
        parseval_err = max(parseval_err, abs(np.sum(np.abs(X) ** 2) / n - energy) / energy)

    power = stft_power(sine_clip(1000.0), StftConfig(frame_len=1024, hop_len=256))
    peaks = np.argmax(power, axis=1)
    interior = peaks[2:-2]

    dct_err = max(np.max(np.abs(dct2_matrix(n, n) @ dct2_matrix(n, n).T - np.eye(n))) for n in (8, 20, 40, 128))
    elapsed = time.perf_counter() - start
    ok = fft_err <= 1e-6 and parseval_err <= 1e-6 and np.all(interior == 64) and dct_err <= 1e-12 and elapsed < 10
    verdict("DSP oracle suite", ok,
            f"fft rel err {fft_err:.1e}, parseval {parseval_err:.1e}, 1000 Hz interior frames all at bin 64 "
            f"= {bool(np.all(interior == 64))}, DCT orthonormality {dct_err:.1e}, {elapsed:.1f}s")


def test_gradient_suite():
    start = time.perf_counter()
    worst = {}
    for layer in GRADIENT_LAYERS:
        errs = []
        for seed in range(5):
            module, x = gradient_instances(layer, seed)
            errs.append(max(check_module_gradients(module, x, rng=seed).values()))
        worst[layer] = max(errs)
    errs = []
    for seed in range(5):
        r = np.random.default_rng(seed)
        n, k = int(r.integers(1, 5)), int(r.integers(2, 9))
        logits = r.normal(size=(n, k)) * 3
        targets = r.dirichlet(np.ones(k), size=n)
        _, grad = softmax_cross_entropy(logits, targets)
        num = numerical_gradient(lambda: softmax_cross_entropy(logits, targets)[0], logits)
        errs.append(relative_error(grad, num))
    worst["softmax_ce"] = max(errs)
    elapsed = time.perf_counter() - start
    ok = max(worst.values()) <= 1e-4 and elapsed < 60
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    verdict("Gradient suite", ok, f"worst relative error over 5 instances: {detail}; {elapsed:.1f}s")


def test_mixup_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(1)
    endpoints = simplex = bounds = True
    for i in range(100):
        shape = (int(rng.integers(1, 20)), int(rng.integers(1, 20)))
        xa, xb = rng.normal(size=shape), rng.normal(size=shape)
        ya, yb = rng.dirichlet(np.ones(8)), one_hot([int(rng.integers(8))], 8)[0]
        a = mixup(xa, ya, xb, yb, 1.0)
        b = mixup(xa, ya, xb, yb, 0.0)
        endpoints &= np.array_equal(a.x_tilde, xa) and np.array_equal(a.y_tilde, ya)
        endpoints &= np.array_equal(b.x_tilde, xb) and np.array_equal(b.y_tilde, yb)
        lam = sample_lambda(0.4, rng)
        m = mixup(xa, ya, xb, yb, lam)
        simplex &= bool(np.all(m.y_tilde >= 0) and abs(m.y_tilde.sum() - 1.0) <= 1e-9)
        lo, hi = np.minimum(xa, xb), np.maximum(xa, xb)
        bounds &= bool(np.all(m.x_tilde >= lo - 1e-12) and np.all(m.x_tilde <= hi + 1e-12))
    elapsed = time.perf_counter() - start
    verdict("Mixup suite", endpoints and simplex and bounds and elapsed < 5,
            f"100 pairs: endpoints exact {endpoints}, labels on simplex {simplex}, "
            f"convex bounds {bounds}; {elapsed:.2f}s")


def test_augmentation_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(2)
    x = rng.normal(size=(32, 48))
    identity = (np.array_equal(affine_transform(x, 0.0, 1.0), x)
                and np.array_equal(brightness_shift(x, 0.0), x)
                and np.array_equal(augment_image(x, ImageAugConfig(0.0, (1.0, 1.0), 0.0), rng), x))
    rot_err = 0.0
    for n in (8, 17, 32):
        sq = rng.normal(size=(n, n))
        rot_err = max(rot_err, np.max(np.abs(affine_transform(sq, 90.0, 1.0) - np.rot90(sq))))
    resize_err = np.max(np.abs(resize_bilinear(x, x.shape) - x))
    constant = True
    c = np.full((20, 30), -7.25)
    for seed in range(20):
        r = np.random.default_rng(seed)
        outs = [affine_transform(c, r.uniform(-45, 45), r.uniform(1.0, 2.0)),
                augment_image(c, ImageAugConfig(), r),
                brightness_shift(c, r.uniform(-1, 1)),
                resize_bilinear(c, (int(r.integers(2, 50)), int(r.integers(2, 50)))),
                to_model_square(c, 16)]
        constant &= all(np.ptp(o) == 0.0 for o in outs)
        constant &= bool(np.all(outs[0] == -7.25) and np.all(outs[3] == -7.25))
    elapsed = time.perf_counter() - start
    ok = identity and rot_err <= 1e-6 and resize_err <= 1e-12 and constant and elapsed < 10
    verdict("Augmentation suite", ok,
            f"identity exact {identity}, 90 deg vs index rotation {rot_err:.1e}, resize identity "
            f"{resize_err:.1e}, constants preserved {constant}; {elapsed:.2f}s")


def test_svm_suite():
    start = time.perf_counter()
    rng = np.random.default_rng(3)
    centers = np.array([[0.0, 0.0, 0.0], [8.0, 0.0, 0.0], [0.0, 8.0, 0.0]])
    X = np.concatenate([c + 0.5 * rng.normal(size=(20, 3)) for c in centers])
    y = np.repeat(np.arange(3), 20)
    blobs = RBFSVMClassifier().fit(X, y)
    blob_acc = blobs.score(X, y)

    Xx = np.array([[0, 0], [1, 1], [0, 1], [1, 0]], dtype=float)
    yx = np.array([0, 0, 1, 1])
    xor_acc = RBFSVMClassifier(C=10.0, gamma=1.0, standardize=False).fit(Xx, yx).score(Xx, yx)

    noisy = np.concatenate([c + 3.0 * rng.normal(size=(30, 3)) for c in centers])
    yn = np.repeat(np.arange(3), 30)
    clf = RBFSVMClassifier(C=1.0, tol=1e-3).fit(noisy, yn)
    kkt = max(clf.kkt_violations(noisy, yn))

    q = rng.normal(scale=4.0, size=(10, 3))
    qs = (q - clf.mean_) / clf.scale_
    direct = np.array([[sum(a * rbf_kernel(v, sv, clf.gamma_) for a, sv in zip(coef, clf.support_vectors_)) + b
                        for coef, b in zip(clf.dual_coef_, clf.intercept_)] for v in qs])
    dec_err = np.max(np.abs(clf.decision_function(q) - direct))
    elapsed = time.perf_counter() - start
    ok = blob_acc == 1.0 and xor_acc == 1.0 and kkt <= 1e-3 + 1e-9 and dec_err <= 1e-10 and elapsed < 30
    verdict("SVM suite", ok,
            f"blobs {blob_acc:.0%}, XOR {xor_acc:.0%}, max KKT violation {kkt:.1e} (tol 1e-3), "
            f"kernel expansion err {dec_err:.1e}; {elapsed:.2f}s")


def test_metrics_oracle():
    start = time.perf_counter()
    worst = 0.0
    for seed in range(50):
        r = np.random.default_rng(seed)
        n = int(r.integers(1, 200))
        t, p = r.integers(0, 8, n), r.integers(0, 8, n)
        rep = report_from_predictions(t, p)
        acc, per_class, macro = confusion_by_counting(list(t), list(p))
        diffs = [abs(rep.accuracy - acc), abs(rep.macro_f1 - macro)]
        for c, (pr, rc, f, s) in zip(rep.per_class, per_class):
            diffs += [abs(c.precision - pr), abs(c.recall - rc), abs(c.f1 - f), abs(c.support - s)]
        worst = max(worst, max(diffs))
    cm = np.zeros((8, 8), dtype=int)
    cm[:2, :2] = [[8, 2], [3, 7]]
    acc, per_class, macro, _ = metrics_from_confusion(cm)
    f0 = 2 * (8 / 11) * 0.8 / (8 / 11 + 0.8)
    f1 = 2 * (7 / 9) * 0.7 / (7 / 9 + 0.7)
    hand = max(abs(acc - 0.75), abs(per_class[0].precision - 8 / 11), abs(per_class[0].recall - 0.8),
               abs(per_class[1].precision - 7 / 9), abs(per_class[1].recall - 0.7),
               abs(per_class[0].f1 - f0), abs(per_class[1].f1 - f1), abs(macro - (f0 + f1) / 2))
    elapsed = time.perf_counter() - start
    verdict("Metrics oracle", worst <= 1e-12 and hand <= 1e-9 and elapsed < 5,
            f"50 random sets max diff {worst:.1e}, [[8,2],[3,7]] max diff {hand:.1e}; {elapsed:.2f}s")


def test_split_contract():
    entries = mock_manifest()
    split = stratified_split(entries, SplitSpec(0.90, 0.05, 0.05, seed=42))
    hist = class_histogram(entries)
    worst = 0.0
    for name, frac in (("train", 0.90), ("val", 0.05), ("test", 0.05)):
        part = class_histogram(select_split(split, name))
        worst = max(worst, max(abs(part[lab] - frac * hist[lab]) for lab in hist))
    verdict("Split contract", len(entries) == 1920 and worst <= 1,
            f"{len(entries)} entries, max per-class deviation from 90/5/5 is {worst:.2f}")


# -- slow criteria -------------------------------------------------------------

@pytest.mark.slow
def test_overfit_check(tmp_path):
    start = time.perf_counter()
    entries = generate_synthetic_corpus(tmp_path, 4, seed=1)
    X = [compute_features(e.path) for e in entries]
    y = np.array([int(e.label) for e in entries])
    # one mini-batch of 64 per epoch under a 0.9 decay leaves too few updates, so this
    # capacity check uses batches of 8 at a constant learning rate
    cnn = ResNetClassifier(epochs=40, batch_size=8, lr_decay=1.0, seed=0).fit(X, y)
    lstm = LSTMClassifier(epochs=30, batch_size=8, lr_decay=1.0, seed=0).fit(X, y)
    cnn_acc, lstm_acc = cnn.score(X, y), lstm.score(X, y)
    elapsed = time.perf_counter() - start
    verdict("Overfit check", len(y) == 32 and cnn_acc == 1.0 and lstm_acc == 1.0 and elapsed < 600,
            f"train accuracy on 32 clips: cnn_lite {cnn_acc:.3f} (40 epochs), lstm {lstm_acc:.3f} "
            f"(30 epochs); {elapsed:.0f}s")


def _pipeline(root, train_flags=(), out="run"):
    """synth -> split -> features -> train cnn_lite -> eval, all through the CLI."""
    root = Path(root)
    if not (root / "feats" / "index.csv").exists():
        assert cli(["--quiet", "synth", "--per-class", "40", "--out", str(root / "corpus")]) == 0
        assert cli(["--quiet", "split", "--manifest", str(root / "corpus" / "manifest.csv"),
                    "--val-frac", "0.05", "--test-frac", "0.05", "--out", str(root / "split")]) == 0
        assert cli(["--quiet", "features", "--manifest", str(root / "split" / "manifest.csv"),
                    "--out", str(root / "feats")]) == 0
    manifest, feats = root / "split" / "manifest.csv", root / "feats"
    assert cli(["--quiet", "train", "--model", "cnn_lite", "--epochs", "30", "--stage-sizes", "128",
                *train_flags, "--manifest", str(manifest), "--features", str(feats),
                "--out", str(root / out)]) == 0
    assert cli(["--quiet", "eval", "--ckpt", str(root / out / "best.ckpt"), "--split", "val",
                "--manifest", str(manifest), "--features", str(feats), "--out", str(root / out / "eval")]) == 0
    summary = read_metrics_csv(root / out / "eval" / "metrics.csv")[-1]
    return float(summary["accuracy"])


@pytest.fixture(scope="module")
def benchmark(tmp_path_factory):
    root = tmp_path_factory.mktemp("bench")
    start = time.perf_counter()
    plain = _pipeline(root, out="plain")
    augmented = _pipeline(root, ("--mixup", "--augment"), out="augmented")
    return root, plain, augmented, time.perf_counter() - start


@pytest.mark.slow
def test_end_to_end_synthetic_benchmark(benchmark):
    root, plain, augmented, elapsed = benchmark
    n_val = int(read_metrics_csv(root / "plain" / "eval" / "metrics.csv")[-1]["support"])
    ok = plain >= 0.60 and plain - augmented <= 0.05 and elapsed < 900
    verdict("End-to-end synthetic benchmark", ok,
            f"val accuracy {plain:.3f} without augmentation, {augmented:.3f} with mixup+affine "
            f"(drop {plain - augmented:+.3f}), {n_val} val clips; {elapsed:.0f}s")


@pytest.mark.slow
def test_determinism(benchmark, tmp_path):
    first = benchmark[0] / "plain"
    _pipeline(tmp_path, out="plain")
    second = tmp_path / "plain"
    same_epochs = (first / "epochs.csv").read_bytes() == (second / "epochs.csv").read_bytes()
    same_metrics = (first / "eval" / "metrics.csv").read_bytes() == (second / "eval" / "metrics.csv").read_bytes()
    n_epochs = len(read_epochs_csv(second / "epochs.csv"))
    verdict("Determinism", same_epochs and same_metrics and n_epochs == 30,
            f"rerun in a fresh directory: epochs.csv identical {same_epochs}, "
            f"metrics.csv identical {same_metrics}")


REAL_DATA_VARS = ("SERKIT_RAVDESS_DIR", "SERKIT_SAVEE_DIR", "SERKIT_RESNET34_CKPT")


@pytest.mark.slow
@pytest.mark.skipif(not all(os.environ.get(v) for v in REAL_DATA_VARS),
                    reason="real-data track needs " + ", ".join(REAL_DATA_VARS))
def test_real_data_track(tmp_path):
    env = {v: os.environ[v] for v in REAL_DATA_VARS}
    assert cli(["--quiet", "manifest", "--corpus", f"ravdess={env['SERKIT_RAVDESS_DIR']}",
                "--corpus", f"savee={env['SERKIT_SAVEE_DIR']}", "--out", str(tmp_path / "m")]) == 0
    assert cli(["--quiet", "split", "--manifest", str(tmp_path / "m" / "manifest.csv"),
                "--out", str(tmp_path / "split")]) == 0
    manifest = str(tmp_path / "split" / "manifest.csv")
    assert cli(["--quiet", "features", "--manifest", manifest, "--out", str(tmp_path / "feats")]) == 0
    common = ["--manifest", manifest, "--features", str(tmp_path / "feats"), "--epochs", "30"]
    assert cli(["--quiet", "train", "--model", "cnn_lite", *common, "--out", str(tmp_path / "scratch")]) == 0
    assert cli(["--quiet", "train", "--model", "cnn34", "--pretrained", env["SERKIT_RESNET34_CKPT"],
                "--mixup", "--augment", *common, "--out", str(tmp_path / "transfer")]) == 0
    best = {name: max(e.val_accuracy for e in read_epochs_csv(tmp_path / name / "epochs.csv"))
            for name in ("scratch", "transfer")}
    verdict("Real-data track", best["transfer"] > best["scratch"],
            f"val accuracy cnn34 finetuned+aug {best['transfer']:.3f} vs cnn_lite scratch {best['scratch']:.3f}")
