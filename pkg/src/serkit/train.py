"""Mini-batch training: Adam, per-epoch exponential learning-rate decay, mixup.

The loop here is model-agnostic; estimators in :mod:`serkit.models.neural`
supply a batch builder that turns example indices into network input.
"""

from __future__ import annotations

import csv
import logging
import time
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .augment import DEFAULT_MIXUP_ALPHA, ImageAugConfig, ResizePolicy, mixup_batch, sample_lambda
from .errors import EmptySplit, NonFiniteGradient, NonFiniteLoss
from .nn.losses import one_hot, softmax_cross_entropy

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    epochs: int = 30
    batch_size: int = 64
    lr: float = 0.001
    lr_decay: float = 0.9
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    mixup_enabled: bool = False
    mixup_alpha: float = DEFAULT_MIXUP_ALPHA
    aug_enabled: bool = False
    aug: ImageAugConfig = field(default_factory=ImageAugConfig)
    resize_policy: ResizePolicy = field(default_factory=lambda: ResizePolicy((128,)))
    seed: int = 42

    def __post_init__(self):
        if self.lr <= 0:
            raise ValueError("lr must be > 0")
        if not 0 < self.lr_decay <= 1:
            raise ValueError("lr_decay must lie in (0, 1]")
        if self.batch_size < 1 or self.epochs < 0:
            raise ValueError("batch_size must be >= 1 and epochs >= 0")

    def to_text(self) -> str:
        """``key=value`` lines, enough to rebuild the config."""
        lines = []
        for f in fields(self):
            value = getattr(self, f.name)
            if f.name == "aug":
                lines.append(f"aug.max_rotate_deg={value.max_rotate_deg!r}")
                lines.append(f"aug.zoom_range={value.zoom_range[0]!r},{value.zoom_range[1]!r}")
                lines.append(f"aug.brightness_delta={value.brightness_delta!r}")
            elif f.name == "resize_policy":
                lines.append("resize_policy.stage_sizes=" + ",".join(str(s) for s in value.stage_sizes))
            else:
                lines.append(f"{f.name}={value!r}")
        return "\n".join(lines) + "\n"


@dataclass
class EpochLog:
    epoch: int
    train_loss: float
    val_loss: float
    val_accuracy: float
    lr: float
    wall_seconds: float
    stage: int = 0


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    """lr * decay**epoch."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return cfg.lr * cfg.lr_decay ** epoch


class Adam:
    """Adam with bias correction; moments are zero-initialised per parameter."""

    def __init__(self, params, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = list(params)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p.value) for p in self.params]
        self.v = [np.zeros_like(p.value) for p in self.params]
        self.t = 0

    @classmethod
    def from_config(cls, params, cfg: TrainConfig):
        return cls(params, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

    def step(self, lr: float):
        for p in self.params:
            if not np.all(np.isfinite(p.grad)):
                raise NonFiniteGradient(p.name)
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        c1 = 1.0 - b1 ** self.t
        c2 = 1.0 - b2 ** self.t
        for p, m, v in zip(self.params, self.m, self.v):
            g = p.grad
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * (g * g)
            p.value -= (lr * (m / c1) / (np.sqrt(v / c2) + self.eps)).astype(p.value.dtype, copy=False)


def batches(order, batch_size):
    """Split ``order`` into batches; a trailing batch of one joins its predecessor
    so batch norm always sees at least two examples."""
    out = [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    if len(out) > 1 and len(out[-1]) == 1:
        out[-2] = np.concatenate([out[-2], out[-1]])
        out.pop()
    return out


def predict_logits(net, make_input, n, batch_size=64):
    net.eval()
    outs = [net.forward(make_input(np.arange(s, min(s + batch_size, n))))
            for s in range(0, n, batch_size)]
    return np.concatenate(outs) if outs else np.zeros((0, 0))


def train_network(net, make_batch, y_train, n_classes, cfg: TrainConfig, epochs=None,
                  make_val=None, y_val=None, stage=0, rng=None, on_epoch=None):
    """Run ``epochs`` epochs (default ``cfg.epochs``) of Adam on ``net``.

    ``make_batch(idx, epoch, training)`` returns network input for example
    indices; ``make_val(idx)`` does the same for the validation set. Returns
    ``(logs, best_state)`` where ``best_state`` is a copy of the weights at
    the epoch with the highest validation accuracy (first one on ties).
    """
    y_train = np.asarray(y_train)
    n = y_train.size
    if n == 0:
        raise EmptySplit("training split is empty")
    epochs = cfg.epochs if epochs is None else epochs
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    adam = Adam.from_config(net.parameters(), cfg)
    targets = one_hot(y_train, n_classes)
    has_val = make_val is not None and y_val is not None and len(y_val) > 0
    logs, best_acc, best_state = [], -1.0, None
    for epoch in range(epochs):
        start = time.perf_counter()
        lr_t = lr_schedule(epoch, cfg)
        net.train()
        total = 0.0
        for idx in batches(rng.permutation(n), cfg.batch_size):
            xb = make_batch(idx, epoch, True)
            yb = targets[idx]
            if cfg.mixup_enabled:
                lam = sample_lambda(cfg.mixup_alpha, rng)
                partner = rng.permutation(idx.size)
                xb, yb = mixup_batch(xb, yb, lam, partner)
                xb = xb.astype(net.dtype, copy=False)
            net.zero_grad()
            logits = net.forward(xb)
            loss, grad = softmax_cross_entropy(logits, yb.astype(logits.dtype))
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"loss became {loss} at epoch {epoch}")
            net.backward(grad)
            adam.step(lr_t)
            total += loss * idx.size
        train_loss = total / n
        val_loss, val_acc = float("nan"), float("nan")
        if has_val:
            logits = predict_logits(net, make_val, len(y_val), cfg.batch_size).astype(np.float64)
            val_loss, _ = softmax_cross_entropy(logits, one_hot(y_val, n_classes), check=False)
            val_acc = float(np.mean(np.argmax(logits, axis=1) == np.asarray(y_val)))
        entry = EpochLog(epoch, float(train_loss), float(val_loss), val_acc, lr_t,
                         time.perf_counter() - start, stage)
        logs.append(entry)
        log.info("stage %d epoch %d train_loss %.4f val_loss %.4f val_acc %.4f lr %.3g",
                 stage, epoch, entry.train_loss, entry.val_loss, entry.val_accuracy, lr_t)
        score = val_acc if has_val else -train_loss
        if best_state is None or score > best_acc:
            best_acc = score
            best_state = {k: v.copy() for k, v in net.state_dict().items()}
        if on_epoch is not None:
            on_epoch(entry)
    net.eval()
    return logs, best_state


EPOCH_FIELDS = ("stage", "epoch", "train_loss", "val_loss", "val_accuracy", "lr")


def write_epochs_csv(path, logs) -> None:
    """Loss curves as CSV. Wall-clock time goes to ``timing.csv`` (see :func:`write_timing_csv`)
    so this file stays bit-identical across reruns with the same seed."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(EPOCH_FIELDS)
        for e in logs:
            writer.writerow([e.stage, e.epoch, repr(e.train_loss), repr(e.val_loss),
                             repr(e.val_accuracy), repr(e.lr)])


def write_timing_csv(path, logs) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["stage", "epoch", "wall_seconds"])
        for e in logs:
            writer.writerow([e.stage, e.epoch, f"{e.wall_seconds:.3f}"])


def read_epochs_csv(path) -> list[EpochLog]:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [EpochLog(int(r["epoch"]), float(r["train_loss"]), float(r["val_loss"]),
                     float(r["val_accuracy"]), float(r["lr"]), 0.0, int(r["stage"])) for r in rows]


def epoch_log_dicts(logs):
    return [asdict(e) for e in logs]


# -- run-level entry points --------------------------------------------------

def _estimator_for(kind, cfg: TrainConfig, stage_sizes=None, **params):
    from .models import build_model

    if kind == "svm":
        return build_model("svm", **params)
    common = dict(epochs=cfg.epochs, batch_size=cfg.batch_size, lr=cfg.lr, lr_decay=cfg.lr_decay,
                  mixup=cfg.mixup_enabled, mixup_alpha=cfg.mixup_alpha, seed=cfg.seed)
    if kind == "lstm":
        from .models import LSTMClassifier
        return LSTMClassifier(**common, **params)
    if kind in ("cnn_lite", "cnn34"):
        from .models import ResNetClassifier
        return ResNetClassifier(
            variant="lite" if kind == "cnn_lite" else "resnet34",
            stage_sizes=tuple(stage_sizes or cfg.resize_policy.stage_sizes),
            augment=cfg.aug_enabled, max_rotate_deg=cfg.aug.max_rotate_deg,
            zoom_range=tuple(cfg.aug.zoom_range), brightness_delta=cfg.aug.brightness_delta,
            **common, **params)
    raise ValueError(f"unknown model kind {kind!r}")


def train_model(kind, manifest, features_dir, cfg: TrainConfig, out_dir=None, pretrained=None,
                **model_params):
    """Train ``kind`` on the manifest's train split, validating on its val split.

    ``manifest`` is a path or a list of entries with splits assigned. When
    ``out_dir`` is given the run directory receives ``config.txt``,
    ``epochs.csv``, ``timing.csv``, ``best.ckpt`` and ``last.ckpt``.
    ``pretrained`` names a converted CNN checkpoint to start from.
    Returns ``(model, logs)``; the model holds the best-validation weights.
    """
    from pathlib import Path

    from .dataset import read_manifest, select_split
    from .features import load_features
    from .models import import_pretrained, model_inputs, save_model, save_state

    entries = read_manifest(manifest) if isinstance(manifest, (str, Path)) else list(manifest)
    train_entries = select_split(entries, "train")
    val_entries = select_split(entries, "val")
    if not train_entries:
        raise EmptySplit("manifest has no 'train' entries")
    X_train, y_train = load_features(train_entries, features_dir)
    eval_set = load_features(val_entries, features_dir) if val_entries else None

    model = _estimator_for(kind, cfg, **model_params)
    logs = []
    if kind == "svm":
        model.fit(model_inputs(model, X_train), y_train)
    else:
        if pretrained is not None:
            model.init_network(X_train[0].shape[1])
            import_pretrained(pretrained, model)
            model.set_params(warm_start=True)
        model.fit(X_train, y_train, eval_set=eval_set)
        logs = model.history_

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        params = "".join(f"model.{k}={v!r}\n" for k, v in sorted(model.get_params().items()))
        (out / "config.txt").write_text(f"kind={kind}\n" + cfg.to_text() + params, encoding="utf-8")
        write_epochs_csv(out / "epochs.csv", logs)
        write_timing_csv(out / "timing.csv", logs)
        save_model(model, out / "best.ckpt")
        if kind == "svm":
            save_model(model, out / "last.ckpt")
        else:
            save_state(model, model.last_state_, out / "last.ckpt")
    return model, logs


def progressive_train(kind, manifest, features_dir, cfg: TrainConfig, out_dir=None, pretrained=None,
                      **model_params):
    """CNN training over ``cfg.resize_policy.stage_sizes`` in order (e.g. 128 then 256).

    Each stage continues from the previous weights with a fresh optimiser and
    learning-rate schedule; logs carry the stage index.
    """
    if kind not in ("cnn_lite", "cnn34"):
        raise ValueError(f"progressive resizing needs a CNN kind, got {kind!r}")
    return train_model(kind, manifest, features_dir, cfg, out_dir=out_dir, pretrained=pretrained,
                       **model_params)
