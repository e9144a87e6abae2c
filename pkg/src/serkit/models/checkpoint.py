"""Model construction, checkpoint save/load and pretrained-weight import."""

from __future__ import annotations

import ast
import logging
from dataclasses import dataclass, field

import numpy as np

from ..dsp import TimeMeanPool
from ..errors import DimMismatch, MissingTensor
from ..tensorio import load_container, save_container
from .neural import LSTMClassifier, ResNetClassifier
from .svm import RBFSVMClassifier

log = logging.getLogger(__name__)

MODEL_KINDS = ("svm", "lstm", "cnn_lite", "cnn34")
HEAD_PREFIX = "fc."


def build_model(kind: str, seed: int = 42, n_features: int = 128, **params):
    """Fresh estimator for ``kind``; neural kinds come with initialised weights."""
    if kind == "svm":
        return RBFSVMClassifier(**params)
    if kind == "lstm":
        return LSTMClassifier(seed=seed, **params).init_network(n_features)
    if kind in ("cnn_lite", "cnn34"):
        variant = "lite" if kind == "cnn_lite" else "resnet34"
        return ResNetClassifier(variant=variant, seed=seed, **params).init_network(n_features)
    raise ValueError(f"unknown model kind {kind!r}; expected one of {MODEL_KINDS}")


def model_kind(model) -> str:
    if isinstance(model, RBFSVMClassifier):
        return "svm"
    return model.kind


def model_inputs(model, X):
    """Feature arrays as the estimator expects them: the SVM takes time-averaged vectors."""
    if model_kind(model) == "svm":
        return TimeMeanPool().transform(X)
    return X


def _encode_params(model):
    return {f"param.{k}": repr(v) for k, v in sorted(model.get_params().items())}


def _decode_params(descriptor):
    return {k[len("param."):]: ast.literal_eval(v) for k, v in descriptor.items() if k.startswith("param.")}


def save_model(model, path) -> None:
    """Write a fitted (or freshly built) model to the named-tensor container."""
    kind = model_kind(model)
    desc = {"kind": kind, **_encode_params(model)}
    if kind == "svm":
        tensors = {
            "classes": model.classes_.astype(np.float64),
            "mean": model.mean_,
            "scale": model.scale_,
            "support_vectors": model.support_vectors_,
            "dual_coef": model.dual_coef_,
            "intercept": model.intercept_,
        }
        desc["gamma"] = repr(float(model.gamma_))
        desc["n_features"] = str(model.n_features_in_)
        save_container(path, tensors, desc, dtype="float64")
        return
    desc["n_features"] = str(model.n_features_in_)
    desc["input_mean"] = repr(float(model.input_mean_))
    desc["input_std"] = repr(float(model.input_std_))
    save_container(path, model.network_.state_dict(), desc, dtype="float32")


def save_state(model, state, path) -> None:
    """Save ``model`` with the weights in ``state`` (e.g. the best epoch) instead of its current ones."""
    current = {k: v.copy() for k, v in model.network_.state_dict().items()}
    model.network_.load_state_dict(state)
    try:
        save_model(model, path)
    finally:
        model.network_.load_state_dict(current)


def load_model(path):
    tensors, desc = load_container(path)
    kind = desc.get("kind")
    params = _decode_params(desc)
    if kind == "svm":
        model = RBFSVMClassifier(**params)
        model.classes_ = tensors["classes"].astype(np.intp)
        model.mean_ = tensors["mean"]
        model.scale_ = tensors["scale"]
        model.support_vectors_ = tensors["support_vectors"]
        model.dual_coef_ = tensors["dual_coef"]
        model.intercept_ = tensors["intercept"]
        model.gamma_ = float(desc["gamma"])
        model.n_features_in_ = int(desc["n_features"])
        model.support_ = np.arange(model.support_vectors_.shape[0])
        return model
    if kind == "lstm":
        model = LSTMClassifier(**params)
    elif kind in ("cnn_lite", "cnn34"):
        model = ResNetClassifier(**params)
    else:
        raise ValueError(f"checkpoint has unknown kind {kind!r}")
    model.init_network(int(desc["n_features"]))
    model.network_.load_state_dict(tensors, strict=True)
    model.network_.eval()
    model.input_mean_ = float(desc["input_mean"])
    model.input_std_ = float(desc["input_std"])
    return model


@dataclass
class ImportReport:
    matched: list = field(default_factory=list)
    skipped: list = field(default_factory=list)
    unused: list = field(default_factory=list)


def import_pretrained(path_or_tensors, model, strict_head: bool = False) -> ImportReport:
    """Copy externally converted ResNet weights into ``model.network_``.

    Tensors are matched by torchvision-style names. Every non-head tensor of
    the model must be present with identical dims. The classification head
    (``fc.*``) is copied only when its dims match; otherwise it keeps its
    fresh initialisation and is reported as skipped (or, with
    ``strict_head``, raises :class:`DimMismatch`). Checkpoint entries the
    model has no use for (e.g. ``num_batches_tracked``) are listed as unused.
    """
    if isinstance(path_or_tensors, dict):
        tensors = path_or_tensors
    else:
        tensors, _ = load_container(path_or_tensors)
    net = model.network_
    state = net.state_dict()
    report = ImportReport()
    updates = {}
    for name, current in state.items():
        is_head = name.startswith(HEAD_PREFIX)
        if name not in tensors:
            if is_head and not strict_head:
                report.skipped.append(name)
                continue
            raise MissingTensor(f"checkpoint lacks tensor {name!r}")
        value = np.asarray(tensors[name])
        if value.shape != current.shape:
            if is_head and not strict_head:
                report.skipped.append(name)
                continue
            raise DimMismatch(f"{name}: checkpoint dims {value.shape} != model dims {current.shape}")
        updates[name] = value
        report.matched.append(name)
    report.unused = [n for n in tensors if n not in state]
    for name, value in updates.items():
        state[name][...] = value
    log.info("imported %d tensors, skipped %d, unused %d",
             len(report.matched), len(report.skipped), len(report.unused))
    return report
