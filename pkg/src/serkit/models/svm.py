"""RBF-kernel SVM trained with SMO, one-vs-rest over the emotion classes."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.validation import check_is_fitted

from ..errors import NonFiniteFeature, ShapeMismatch, SingleClass


def rbf_kernel(u, v, gamma: float) -> float:
    """exp(-gamma * ||u - v||^2)."""
    if gamma <= 0:
        raise ValueError("gamma must be > 0")
    d = np.asarray(u, dtype=np.float64) - np.asarray(v, dtype=np.float64)
    return float(np.exp(-gamma * np.dot(d, d)))


def rbf_kernel_matrix(a, b, gamma: float) -> np.ndarray:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    sq = (a * a).sum(axis=1)[:, None] + (b * b).sum(axis=1)[None, :] - 2.0 * (a @ b.T)
    return np.exp(-gamma * np.maximum(sq, 0.0))


def smo_binary(K, y, C=1.0, tol=1e-3, max_iter=100_000, tau=1e-12):
    """Solve the soft-margin dual for labels ``y`` in {-1, +1}.

    Uses the maximal-violating-pair working set with a second-order choice
    of the partner index (Fan, Chen and Lin). Stops once the KKT gap
    ``max_{I_up} -y*G - min_{I_low} -y*G`` drops to ``tol``.

    Returns ``(alpha, b, history)`` where ``history`` is the dual objective
    after each update, and the decision function is
    ``sum_i alpha_i y_i K(x_i, x) + b``.
    """
    y = np.asarray(y, dtype=np.float64)
    n = y.size
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 0.5 a'Qa - e'a
    diag = np.diag(K).copy()
    history = []
    for _ in range(max_iter):
        score = -y * grad
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        if not up.any() or not low.any():
            break
        i = int(np.argmax(np.where(up, score, -np.inf)))
        m_up = score[i]
        m_low = np.min(np.where(low, score, np.inf))
        if m_up - m_low <= tol:
            break
        b_ij = m_up - score
        cand = low & (b_ij > 0)
        a_ij = diag[i] + diag - 2.0 * K[i]
        a_ij = np.where(a_ij > 0, a_ij, tau)
        j = int(np.argmax(np.where(cand, b_ij * b_ij / a_ij, -np.inf)))

        # Two-variable update in the direction that keeps sum(alpha * y) fixed.
        quad = max(diag[i] + diag[j] - 2.0 * K[i, j], tau)
        delta = (score[i] - score[j]) / quad
        # alpha_i += y_i * t, alpha_j -= y_j * t with t >= 0
        t_max_i = C - alpha[i] if y[i] > 0 else alpha[i]
        t_max_j = alpha[j] if y[j] > 0 else C - alpha[j]
        t = min(delta, t_max_i, t_max_j)
        old_i, old_j = alpha[i], alpha[j]
        alpha[i] = np.clip(old_i + y[i] * t, 0.0, C)
        alpha[j] = np.clip(old_j - y[j] * t, 0.0, C)
        di, dj = alpha[i] - old_i, alpha[j] - old_j
        grad += y * (K[:, i] * (y[i] * di) + K[:, j] * (y[j] * dj))
        # 0.5 a'Qa - e'a = 0.5 a'G - 0.5 e'a; the dual objective is its negative.
        history.append(0.5 * float(alpha.sum()) - 0.5 * float(alpha @ grad))

    score = -y * grad
    free = (alpha > 0) & (alpha < C)
    if free.any():
        b = float(np.mean(score[free]))
    else:
        up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
        low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
        hi = score[up].max() if up.any() else 0.0
        lo = score[low].min() if low.any() else 0.0
        b = 0.5 * (hi + lo)
    return alpha, b, history


class RBFSVMClassifier(ClassifierMixin, BaseEstimator):
    """One-vs-rest RBF SVM over standardised features.

    Parameters
    ----------
    C : float
        Box constraint.
    gamma : float or "scale"
        Kernel width; "scale" uses 1 / (n_features * var(X_standardised)).
    tol : float
        KKT gap at which SMO stops.
    standardize : bool
        Fit per-feature mean/std on the training data and apply them first.
    """

    def __init__(self, C=1.0, gamma="scale", tol=1e-3, max_iter=100_000, standardize=True):
        self.C = C
        self.gamma = gamma
        self.tol = tol
        self.max_iter = max_iter
        self.standardize = standardize

    def _check_X(self, X, fitting=False):
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2:
            raise ShapeMismatch(f"expected a 2-D feature matrix, got shape {X.shape}")
        if not np.all(np.isfinite(X)):
            raise NonFiniteFeature("features contain NaN or infinity")
        if not fitting and X.shape[1] != self.n_features_in_:
            raise ShapeMismatch(f"model was fitted on {self.n_features_in_} features, got {X.shape[1]}")
        return X

    def _scale(self, X):
        return (X - self.mean_) / self.scale_

    def fit(self, X, y):
        X = self._check_X(X, fitting=True)
        y = np.asarray(y)
        if X.shape[0] != y.shape[0]:
            raise ShapeMismatch("X and y have different lengths")
        if X.shape[0] < 2:
            raise ValueError("need at least 2 samples")
        classes = np.unique(y)
        if classes.size < 2:
            raise SingleClass("training data contains a single class")
        self.classes_ = classes
        self.n_features_in_ = X.shape[1]
        if self.standardize:
            self.mean_ = X.mean(axis=0)
            scale = X.std(axis=0)
            self.scale_ = np.where(scale > 0, scale, 1.0)
        else:
            self.mean_ = np.zeros(X.shape[1])
            self.scale_ = np.ones(X.shape[1])
        Xs = self._scale(X)
        if self.gamma == "scale":
            var = Xs.var()
            self.gamma_ = 1.0 / (Xs.shape[1] * var) if var > 0 else 1.0
        else:
            self.gamma_ = float(self.gamma)
        K = rbf_kernel_matrix(Xs, Xs, self.gamma_)

        n_cls = classes.size
        binary = n_cls == 2
        problems = [classes[1]] if binary else list(classes)
        coefs = np.zeros((len(problems), X.shape[0]))
        intercepts = np.zeros(len(problems))
        self.dual_history_ = []
        for k, cls in enumerate(problems):
            yk = np.where(y == cls, 1.0, -1.0)
            alpha, b, hist = smo_binary(K, yk, self.C, self.tol, self.max_iter)
            coefs[k] = alpha * yk
            intercepts[k] = b
            self.dual_history_.append(np.asarray(hist))
        sv = np.flatnonzero(np.any(coefs != 0.0, axis=0))
        self.support_ = sv
        self.support_vectors_ = Xs[sv]
        self.dual_coef_ = coefs[:, sv]
        self.intercept_ = intercepts
        return self

    def decision_function(self, X):
        """One column per class (one-vs-rest); for two classes a single column like scikit-learn."""
        check_is_fitted(self, "support_vectors_")
        Xs = self._scale(self._check_X(X))
        K = rbf_kernel_matrix(Xs, self.support_vectors_, self.gamma_)
        scores = K @ self.dual_coef_.T + self.intercept_
        return scores[:, 0] if self.classes_.size == 2 else scores

    def class_scores(self, X):
        """(n, n_classes) scores, column k for ``classes_[k]``."""
        s = self.decision_function(X)
        if self.classes_.size == 2:
            return np.stack([-s, s], axis=1)
        return s

    def predict(self, X):
        # argmax returns the first maximum, so ties go to the lowest class code.
        return self.classes_[np.argmax(self.class_scores(X), axis=1)]

    def kkt_violations(self, X, y):
        """Per-problem max violation of the KKT conditions on the training set."""
        check_is_fitted(self, "support_vectors_")
        X = self._check_X(X)
        y = np.asarray(y)
        scores = self.decision_function(X)
        scores = scores[:, None] if scores.ndim == 1 else scores
        problems = [self.classes_[1]] if self.classes_.size == 2 else list(self.classes_)
        out = []
        for k, cls in enumerate(problems):
            yk = np.where(y == cls, 1.0, -1.0)
            alpha = np.zeros(X.shape[0])
            alpha[self.support_] = np.abs(self.dual_coef_[k])
            margin = yk * scores[:, k]
            lower = np.where(alpha < self.C, 1.0 - margin, -np.inf)  # alpha < C needs margin >= 1
            upper = np.where(alpha > 0, margin - 1.0, -np.inf)       # alpha > 0 needs margin <= 1
            out.append(float(max(lower.max(), upper.max(), 0.0)))
        return out
