"""Scikit-learn style estimators around the BiLSTM and ResNet networks.

Both take ``X`` as a sequence of variable-length log-mel arrays of shape
(frames, n_mels) and integer emotion codes ``y``.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..augment import ImageAugConfig, ResizePolicy, augment_image, resize_bilinear, to_model_square
from ..errors import ShapeMismatch
from ..nn.losses import softmax
from ..train import TrainConfig, predict_logits, train_network
from .networks import (
    CNN_IN_CHANNELS,
    LITE_BLOCKS,
    MIN_CNN_INPUT,
    RESNET34_BLOCKS,
    build_lstm_net,
    build_resnet,
)

N_CLASSES = 8


def _as_2d_list(X):
    out = []
    for x in X:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise ShapeMismatch(f"expected (frames, bands) arrays, got shape {x.shape}")
        if not np.all(np.isfinite(x)):
            raise ValueError("features contain NaN or infinity")
        out.append(x)
    return out


class _NeuralClassifier(ClassifierMixin, BaseEstimator):
    """Shared fit/predict plumbing; subclasses build the network and its input."""

    def _train_config(self, **overrides) -> TrainConfig:
        kw = dict(epochs=self.epochs, batch_size=self.batch_size, lr=self.lr, lr_decay=self.lr_decay,
                  mixup_enabled=self.mixup, mixup_alpha=self.mixup_alpha, seed=self.seed)
        kw.update(overrides)
        return TrainConfig(**kw)

    def _ensure_network(self, n_features):
        if not (self.warm_start and hasattr(self, "network_")):
            self.network_ = self._build_network(n_features)
        self.network_.astype(np.dtype(self.dtype))
        self.n_features_in_ = n_features

    def _normalise(self, arr):
        return ((arr - self.input_mean_) / self.input_std_).astype(self.dtype, copy=False)

    def _fit_normaliser(self, arrays):
        cat = np.concatenate([a.ravel() for a in arrays])
        self.input_mean_ = float(cat.mean())
        std = float(cat.std())
        self.input_std_ = std if std > 0 else 1.0

    def predict_logits(self, X):
        check_is_fitted(self, "network_")
        inputs = self._eval_inputs(_as_2d_list(X))
        return predict_logits(self.network_, lambda idx: inputs[idx], len(inputs),
                              self.batch_size).astype(np.float64)

    def predict_proba(self, X):
        return softmax(self.predict_logits(X))

    def predict(self, X):
        return self.classes_[np.argmax(self.predict_logits(X), axis=1)]

    def _finish(self, best_state):
        self.last_state_ = {k: v.copy() for k, v in self.network_.state_dict().items()}
        self.best_state_ = best_state
        if self.restore_best and best_state is not None:
            self.network_.load_state_dict(best_state)
        self.network_.eval()
        return self


class LSTMClassifier(_NeuralClassifier):
    """Two bidirectional LSTM layers, dropout, linear head over 8 emotions.

    Spectrograms are bilinearly resampled along time to ``seq_len`` frames
    so examples of different duration batch together.
    """

    def __init__(self, hidden=128, dropout=0.5, seq_len=128, epochs=200, batch_size=64, lr=0.001,
                 lr_decay=0.9, mixup=False, mixup_alpha=0.4, seed=42, dtype="float32",
                 restore_best=True, warm_start=False):
        self.hidden = hidden
        self.dropout = dropout
        self.seq_len = seq_len
        self.epochs = epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lr_decay = lr_decay
        self.mixup = mixup
        self.mixup_alpha = mixup_alpha
        self.seed = seed
        self.dtype = dtype
        self.restore_best = restore_best
        self.warm_start = warm_start

    kind = "lstm"

    def _build_network(self, n_features):
        return build_lstm_net(n_features, self.hidden, self.dropout, N_CLASSES, seed=self.seed)

    def init_network(self, n_features=128):
        self.classes_ = np.arange(N_CLASSES)
        self._ensure_network(n_features)
        self.input_mean_, self.input_std_ = 0.0, 1.0
        return self

    def _to_sequence(self, x):
        if x.shape[0] == 1:
            x = np.repeat(x, 2, axis=0)
        if x.shape[0] == self.seq_len:
            return x
        return resize_bilinear(x, (self.seq_len, x.shape[1]))

    def _eval_inputs(self, arrays):
        if arrays and arrays[0].shape[1] != self.n_features_in_:
            raise ShapeMismatch(f"model expects {self.n_features_in_} bands, got {arrays[0].shape[1]}")
        return self._normalise(np.stack([self._to_sequence(x) for x in arrays]))

    def fit(self, X, y, eval_set=None):
        arrays = _as_2d_list(X)
        y = np.asarray(y, dtype=np.intp)
        self.classes_ = np.arange(N_CLASSES)
        self._ensure_network(arrays[0].shape[1])
        seqs = np.stack([self._to_sequence(x) for x in arrays])
        self._fit_normaliser([seqs])
        train_in = self._normalise(seqs)
        make_val = y_val = None
        if eval_set is not None:
            val_in = self._eval_inputs(_as_2d_list(eval_set[0]))
            y_val = np.asarray(eval_set[1], dtype=np.intp)
            make_val = lambda idx: val_in[idx]  # noqa: E731
        cfg = self._train_config()
        self.history_, best = train_network(
            self.network_, lambda idx, epoch, training: train_in[idx], y, N_CLASSES, cfg,
            make_val=make_val, y_val=y_val)
        return self._finish(best)


class ResNetClassifier(_NeuralClassifier):
    """Residual CNN over square log-mel images (mel bands as rows).

    ``variant="lite"`` uses one block per stage, ``"resnet34"`` the
    [3, 4, 6, 3] layout. With several ``stage_sizes`` the network is trained
    at each size in turn (progressive resizing), continuing from the
    previous stage's weights with a fresh optimiser and learning-rate
    schedule. Image augmentation (rotation, zoom, brightness) is applied per
    example and epoch when ``augment`` is set.
    """

    def __init__(self, variant="lite", base_width=None, stage_sizes=(128,), epochs=30,
                 stage_epochs=None, batch_size=64, lr=0.001, lr_decay=0.9, mixup=False,
                 mixup_alpha=0.4, augment=False, max_rotate_deg=4.0, zoom_range=(1.0, 1.15),
                 brightness_delta=0.4, seed=42, dtype="float32", restore_best=True, warm_start=False):
        self.variant = variant
        self.base_width = base_width
        self.stage_sizes = stage_sizes
        self.epochs = epochs
        self.stage_epochs = stage_epochs
        self.batch_size = batch_size
        self.lr = lr
        self.lr_decay = lr_decay
        self.mixup = mixup
        self.mixup_alpha = mixup_alpha
        self.augment = augment
        self.max_rotate_deg = max_rotate_deg
        self.zoom_range = zoom_range
        self.brightness_delta = brightness_delta
        self.seed = seed
        self.dtype = dtype
        self.restore_best = restore_best
        self.warm_start = warm_start

    @property
    def kind(self):
        return "cnn34" if self.variant == "resnet34" else "cnn_lite"

    @property
    def blocks(self):
        if self.variant == "resnet34":
            return RESNET34_BLOCKS
        if self.variant == "lite":
            return LITE_BLOCKS
        raise ValueError(f"unknown variant {self.variant!r}")

    @property
    def width(self):
        if self.base_width is not None:
            return self.base_width
        return 64 if self.variant == "resnet34" else 16

    def _build_network(self, n_features):
        return build_resnet(self.blocks, self.width, N_CLASSES, CNN_IN_CHANNELS, seed=self.seed)

    def init_network(self, n_features=128):
        self.classes_ = np.arange(N_CLASSES)
        self._ensure_network(n_features)
        self.input_mean_, self.input_std_ = 0.0, 1.0
        return self

    def _policy(self):
        return ResizePolicy(tuple(self.stage_sizes))

    def _images(self, arrays, size):
        if size < MIN_CNN_INPUT:
            raise ShapeMismatch(f"CNN input must be at least {MIN_CNN_INPUT} pixels square")
        return np.stack([to_model_square(x, size) for x in arrays])

    def _to_input(self, imgs):
        x = self._normalise(imgs)
        return np.repeat(x[..., None], CNN_IN_CHANNELS, axis=-1)

    def _eval_inputs(self, arrays):
        size = self._policy().stage_sizes[-1]
        imgs = self._images(arrays, size)
        return self._to_input(imgs)

    def fit(self, X, y, eval_set=None):
        arrays = _as_2d_list(X)
        y = np.asarray(y, dtype=np.intp)
        self.classes_ = np.arange(N_CLASSES)
        self._ensure_network(arrays[0].shape[1])
        policy = self._policy()
        aug_cfg = ImageAugConfig(self.max_rotate_deg, tuple(self.zoom_range), self.brightness_delta)
        stage_epochs = self.stage_epochs or [self.epochs] * len(policy.stage_sizes)
        if len(stage_epochs) != len(policy.stage_sizes):
            raise ValueError("stage_epochs must give one count per stage size")
        self.history_ = []
        best = None
        val_arrays = _as_2d_list(eval_set[0]) if eval_set is not None else None
        y_val = np.asarray(eval_set[1], dtype=np.intp) if eval_set is not None else None
        rng = np.random.default_rng(self.seed)
        for stage, (size, n_epochs) in enumerate(zip(policy.stage_sizes, stage_epochs)):
            train_imgs = self._images(arrays, size)
            if stage == 0:
                self._fit_normaliser([train_imgs])

            def make_batch(idx, epoch, training, _imgs=train_imgs, _stage=stage):
                imgs = _imgs[idx]
                if training and self.augment:
                    imgs = np.stack([
                        augment_image(img, aug_cfg, np.random.default_rng([self.seed, _stage, epoch, int(i)]))
                        for img, i in zip(imgs, idx)])
                return self._to_input(imgs)

            make_val = None
            if val_arrays is not None:
                val_in = self._to_input(self._images(val_arrays, size))
                make_val = lambda idx, _v=val_in: _v[idx]  # noqa: E731
            cfg = self._train_config(epochs=n_epochs)
            logs, best = train_network(self.network_, make_batch, y, N_CLASSES, cfg, make_val=make_val,
                                       y_val=y_val, stage=stage, rng=rng)
            self.history_.extend(logs)
        return self._finish(best)
