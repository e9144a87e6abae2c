"""Central finite-difference gradient verification."""

from __future__ import annotations

import numpy as np


def numerical_gradient(f, x, eps=1e-5):
    """d f / d x by central differences; ``x`` is perturbed in place and restored."""
    grad = np.zeros_like(x, dtype=np.float64)
    flat = x.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        f_plus = f()
        flat[i] = orig - eps
        f_minus = f()
        flat[i] = orig
        gflat[i] = (f_plus - f_minus) / (2.0 * eps)
    return grad


def relative_error(analytic, numeric) -> float:
    """||a - n|| / max(||a||, ||n||), 0 when both vanish."""
    a = np.asarray(analytic, dtype=np.float64).ravel()
    n = np.asarray(numeric, dtype=np.float64).ravel()
    denom = max(np.linalg.norm(a), np.linalg.norm(n))
    if denom == 0.0:
        return 0.0
    return float(np.linalg.norm(a - n) / denom)


def check_module_gradients(module, x, rng=None, eps=1e-5, max_entries=None):
    """Compare ``module.backward`` against finite differences of sum(out * R).

    Works in float64. Returns a dict mapping ``"input"`` and every parameter
    name to its relative error. ``max_entries`` caps how many entries of each
    tensor are probed (a random subset) to bound runtime on larger layers.
    """
    rng = np.random.default_rng(rng)
    module.astype(np.float64)
    x = np.array(x, dtype=np.float64)
    out = module.forward(x)
    proj = rng.standard_normal(out.shape)

    def loss():
        return float(np.sum(module.forward(x) * proj))

    module.zero_grad()
    module.forward(x)
    dx = module.backward(proj.copy())
    analytic = {"input": dx.copy()}
    for name, p in module.named_parameters():
        analytic[name] = p.grad.copy()

    targets = [("input", x)] + [(name, p.value) for name, p in module.named_parameters()]
    errors = {}
    for name, arr in targets:
        if max_entries is None or arr.size <= max_entries:
            num = numerical_gradient(loss, arr, eps)
            errors[name] = relative_error(analytic[name], num)
            continue
        idx = rng.choice(arr.size, size=max_entries, replace=False)
        flat = arr.reshape(-1)
        num = np.empty(max_entries)
        for k, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + eps
            fp = loss()
            flat[i] = orig - eps
            fm = loss()
            flat[i] = orig
            num[k] = (fp - fm) / (2.0 * eps)
        errors[name] = relative_error(analytic[name].reshape(-1)[idx], num)
    return errors
