"""Accuracy, per-class precision/recall/F1, confusion matrices and report files."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import LABEL_NAMES, N_CLASSES
from .errors import EmptyMatrix, EmptySplit


@dataclass(frozen=True)
class ClassMetrics:
    label: str
    precision: float
    recall: float
    f1: float
    support: int


@dataclass(frozen=True)
class EvalReport:
    n_examples: int
    accuracy: float
    per_class: tuple
    macro_f1: float
    confusion: np.ndarray
    zero_divisions: int = 0


def confusion_matrix(y_true, y_pred, n_classes: int = N_CLASSES) -> np.ndarray:
    """Counts with rows = true class, columns = predicted class."""
    y_true = np.asarray(y_true, dtype=np.intp)
    y_pred = np.asarray(y_pred, dtype=np.intp)
    if y_true.shape != y_pred.shape:
        raise ValueError("y_true and y_pred differ in length")
    cm = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(cm, (y_true, y_pred), 1)
    return cm


def _safe_div(num, den):
    return (num / den, False) if den > 0 else (0.0, True)


def metrics_from_confusion(confusion, labels=LABEL_NAMES):
    """``(accuracy, per_class, macro_f1, zero_divisions)`` from a count matrix.

    A 0/0 precision, recall or F1 counts as 0 and is tallied in
    ``zero_divisions``. The macro F1 averages only classes with support.
    """
    cm = np.asarray(confusion)
    if cm.ndim != 2 or cm.shape[0] != cm.shape[1]:
        raise ValueError(f"confusion matrix must be square, got {cm.shape}")
    if np.any(cm < 0):
        raise ValueError("confusion counts must be non-negative")
    cm = cm.astype(np.int64)
    total = int(cm.sum())
    if total == 0:
        raise EmptyMatrix("confusion matrix has no counts")
    diag = np.diag(cm)
    accuracy = int(diag.sum()) / total
    per_class, zero_div = [], 0
    for k in range(cm.shape[0]):
        tp = int(diag[k])
        precision, z1 = _safe_div(tp, int(cm[:, k].sum()))
        recall, z2 = _safe_div(tp, int(cm[k, :].sum()))
        f1, z3 = _safe_div(2 * precision * recall, precision + recall)
        zero_div += z1 + z2 + z3
        per_class.append(ClassMetrics(labels[k] if k < len(labels) else str(k),
                                      precision, recall, f1, int(cm[k, :].sum())))
    supported = [c.f1 for c in per_class if c.support > 0]
    macro_f1 = float(np.mean(supported))
    return accuracy, tuple(per_class), macro_f1, zero_div


def report_from_predictions(y_true, y_pred, n_classes: int = N_CLASSES) -> EvalReport:
    cm = confusion_matrix(y_true, y_pred, n_classes)
    accuracy, per_class, macro_f1, zero_div = metrics_from_confusion(cm)
    return EvalReport(int(cm.sum()), accuracy, per_class, macro_f1, cm, zero_div)


def evaluate(model, X, y) -> EvalReport:
    """Predict ``X`` with a fitted estimator and summarise against ``y``."""
    from .models import model_inputs

    y = np.asarray(y, dtype=np.intp)
    if y.size == 0:
        raise EmptySplit("nothing to evaluate")
    return report_from_predictions(y, model.predict(model_inputs(model, X)))


def evaluate_split(model, manifest, features_dir, split: str = "val") -> EvalReport:
    from .dataset import read_manifest, select_split
    from .features import load_features

    entries = read_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    chosen = select_split(entries, split)
    if not chosen:
        raise EmptySplit(f"manifest has no {split!r} entries")
    X, y = load_features(chosen, features_dir)
    return evaluate(model, X, y)


def emit_report(report: EvalReport, out_dir) -> None:
    """Write ``metrics.csv``, ``confusion.csv`` and ``report.txt``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["label", "precision", "recall", "f1", "support", "accuracy"])
        for c in report.per_class:
            w.writerow([c.label, f"{c.precision:.6f}", f"{c.recall:.6f}", f"{c.f1:.6f}", c.support, ""])
        w.writerow(["macro", "", "", f"{report.macro_f1:.6f}", report.n_examples, f"{report.accuracy:.6f}"])
    labels = [c.label for c in report.per_class]
    with open(out / "confusion.csv", "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\pred", *labels])
        for label, row in zip(labels, report.confusion):
            w.writerow([label, *(int(v) for v in row)])
    lines = [
        "F1 is macro-averaged: unweighted mean over classes with support > 0.",
        f"examples: {report.n_examples}",
        f"accuracy: {report.accuracy:.4f}",
        f"macro F1: {report.macro_f1:.4f}",
        f"zero-division cases (scored as 0): {report.zero_divisions}",
        "",
        f"{'label':<10} {'precision':>9} {'recall':>7} {'f1':>7} {'support':>8}",
    ]
    for c in report.per_class:
        lines.append(f"{c.label:<10} {c.precision:>9.4f} {c.recall:>7.4f} {c.f1:>7.4f} {c.support:>8d}")
    (out / "report.txt").write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_confusion_csv(path) -> np.ndarray:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))[1:]
    return np.array([[int(v) for v in r[1:]] for r in rows], dtype=np.int64)


def read_metrics_csv(path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))
