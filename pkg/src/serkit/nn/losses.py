import numpy as np

from ..errors import InvalidTarget


def softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def log_softmax(logits, axis=-1):
    z = logits - logits.max(axis=axis, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=axis, keepdims=True))


def softmax_cross_entropy(logits, targets, check=True):
    """Mean cross-entropy against probability-vector targets.

    Returns ``(loss, dloss/dlogits)``. Targets may be soft (mixup); each row
    must be non-negative and sum to 1 within 1e-6.
    """
    logits = np.asarray(logits)
    targets = np.asarray(targets, dtype=logits.dtype)
    if logits.shape != targets.shape or logits.ndim != 2:
        raise InvalidTarget(f"targets shape {targets.shape} does not match logits {logits.shape}")
    if check:
        sums = targets.sum(axis=1)
        if np.any(targets < -1e-12) or np.any(np.abs(sums - 1.0) > 1e-6):
            bad = int(np.argmax(np.abs(sums - 1.0)))
            raise InvalidTarget(f"target row {bad} is not a probability distribution (sum {sums[bad]})")
    batch = logits.shape[0]
    logp = log_softmax(logits)
    loss = -float(np.sum(targets * logp)) / batch
    grad = (np.exp(logp) - targets) / batch
    return loss, grad


def one_hot(labels, n_classes):
    labels = np.asarray(labels, dtype=np.intp)
    out = np.zeros((labels.size, n_classes))
    out[np.arange(labels.size), labels] = 1.0
    return out
