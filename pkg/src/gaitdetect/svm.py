"""Soft-margin RBF-SVM trained by sequential minimal optimization.

The dual problem

    min  0.5 * a' Q a - sum(a)   s.t.  0 <= a_i <= C,  sum(a_i y_i) = 0,
    Q_ij = y_i y_j k(x_i, x_j),  k(x, x') = exp(-gamma ||x - x'||^2)

is solved by repeatedly optimizing the maximal-violating pair analytically.
Probability outputs come from Platt's sigmoid, fitted on cross-validated
decision values of an internal chronological 3-fold split.
"""

from __future__ import annotations

import logging

import numpy as np
from numba import njit
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import DataError

log = logging.getLogger(__name__)

DEFAULT_TOL = 1e-3
# Iteration budget counted in kernel-row evaluations (2 rows per SMO step).
# Sized for session-scale problems; small problems converge long before it.
DEFAULT_KERNEL_EVAL_BUDGET = 5e8
_TAU = 1e-12
_SV_EPS = 1e-8


def squared_distances(X, Y) -> np.ndarray:
    """Pairwise squared Euclidean distances, [len(X) x len(Y)]."""
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    d = X @ Y.T
    d *= -2.0
    d += (X * X).sum(axis=1)[:, None]
    d += (Y * Y).sum(axis=1)[None, :]
    np.maximum(d, 0.0, out=d)
    return d


def rbf_kernel(X, Y, gamma: float) -> np.ndarray:
    return np.exp(-gamma * squared_distances(X, Y))


@njit(cache=True)
def _smo_kernel(K, y, C, tol, max_iter):  # pragma: no cover - executed compiled
    n = y.shape[0]
    alpha = np.zeros(n)
    grad = -np.ones(n)  # gradient of 0.5 a'Qa - sum(a)
    it = 0
    converged = False
    # maximal violating pair (first-order selection) for the first step;
    # subsequent selections are fused into the gradient-update pass
    g_max = -1e300
    g_min = 1e300
    i = -1
    j = -1
    for t in range(n):
        v = -y[t] * grad[t]
        if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
            if v > g_max:
                g_max = v
                i = t
        if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
            if v < g_min:
                g_min = v
                j = t
    while it < max_iter:
        it += 1
        if i < 0 or j < 0 or g_max - g_min <= tol:
            converged = True
            break

        old_ai = alpha[i]
        old_aj = alpha[j]
        # curvature along the feasible direction is the same in both branches
        if y[i] != y[j]:
            quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
            if quad <= 0.0:
                quad = _TAU
            delta = (-grad[i] - grad[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0.0:
                if alpha[j] < 0.0:
                    alpha[j] = 0.0
                    alpha[i] = diff
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = C - diff
            else:
                if alpha[i] < 0.0:
                    alpha[i] = 0.0
                    alpha[j] = -diff
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = C + diff
        else:
            quad = K[i, i] + K[j, j] - 2.0 * K[i, j]
            if quad <= 0.0:
                quad = _TAU
            delta = (grad[i] - grad[j]) / quad
            s = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if s > C:
                if alpha[i] > C:
                    alpha[i] = C
                    alpha[j] = s - C
                if alpha[j] > C:
                    alpha[j] = C
                    alpha[i] = s - C
            else:
                if alpha[j] < 0.0:
                    alpha[j] = 0.0
                    alpha[i] = s
                if alpha[i] < 0.0:
                    alpha[i] = 0.0
                    alpha[j] = s

        d_i = (alpha[i] - old_ai) * y[i]
        d_j = (alpha[j] - old_aj) * y[j]
        # single pass: update the gradient (contiguous kernel rows; K is
        # exactly symmetric) and select the next violating pair
        g_max = -1e300
        g_min = 1e300
        i2 = -1
        j2 = -1
        for t in range(n):
            grad[t] += y[t] * (K[i, t] * d_i + K[j, t] * d_j)
            v = -y[t] * grad[t]
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                if v > g_max:
                    g_max = v
                    i2 = t
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                if v < g_min:
                    g_min = v
                    j2 = t
        i = i2
        j = j2

    # bias from free support vectors, else from the violating-pair bounds
    b_sum = 0.0
    n_free = 0
    for t in range(n):
        if _SV_EPS < alpha[t] < C - _SV_EPS:
            b_sum += -y[t] * grad[t]
            n_free += 1
    if n_free > 0:
        b = b_sum / n_free
    else:
        g_max = -1e300
        g_min = 1e300
        for t in range(n):
            if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
                v = -y[t] * grad[t]
                if v > g_max:
                    g_max = v
            if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
                v = -y[t] * grad[t]
                if v < g_min:
                    g_min = v
        b = (g_max + g_min) / 2.0

    dual_obj = 0.0
    for t in range(n):
        dual_obj += alpha[t] * (1.0 - grad[t])
    dual_obj *= 0.5
    return alpha, grad, b, dual_obj, it, converged


def smo_solve(K, y, C: float, tol: float = DEFAULT_TOL,
              kernel_eval_budget: float = DEFAULT_KERNEL_EVAL_BUDGET):
    """Solve the dual on a precomputed kernel matrix.

    Returns (alpha, bias, dual_objective, n_iter, converged). The budget
    bounds the number of kernel-row evaluations (two per iteration);
    exhaustion is reported via ``converged`` and a log warning.
    """
    K = np.ascontiguousarray(K, dtype=float)
    y = np.asarray(y, dtype=float)
    n = y.shape[0]
    if K.shape != (n, n):
        raise DataError("kernel matrix shape does not match labels")
    max_iter = max(1000, int(kernel_eval_budget / (2 * max(n, 1))))
    alpha, _grad, b, dual_obj, it, converged = _smo_kernel(K, y, float(C), float(tol), max_iter)
    if not converged:
        log.warning("SMO stopped at iteration budget %d without reaching tolerance %g", it, tol)
    return alpha, b, dual_obj, it, converged


def fit_platt_sigmoid(decision_values, y, max_iter: int = 200):
    """Fit P(pos | f) = 1 / (1 + exp(a*f + b)) by regularized ML (Newton).

    Uses the prior-corrected targets of Platt's method; ``a`` comes out
    negative whenever larger decision values mean the positive class.
    """
    f = np.asarray(decision_values, dtype=float)
    y = np.asarray(y, dtype=float)
    n_pos = float((y > 0).sum())
    n_neg = float((y <= 0).sum())
    hi = (n_pos + 1.0) / (n_pos + 2.0)
    lo = 1.0 / (n_neg + 2.0)
    t = np.where(y > 0, hi, lo)

    a = 0.0
    b = np.log((n_neg + 1.0) / (n_pos + 1.0))
    sigma = 1e-12
    eps = 1e-5

    def _fval(a, b):
        z = a * f + b
        return float(np.sum(np.where(z >= 0, t * z + np.log1p(np.exp(-z)),
                                     (t - 1.0) * z + np.log1p(np.exp(z)))))

    fval = _fval(a, b)
    for _ in range(max_iter):
        z = a * f + b
        p = np.where(z >= 0, np.exp(-z) / (1.0 + np.exp(-z)), 1.0 / (1.0 + np.exp(z)))
        q = 1.0 - p
        d1 = p * q
        g_a = float(np.dot(f, t - p)) + sigma * a
        g_b = float(np.sum(t - p)) + sigma * b
        if abs(g_a) < eps and abs(g_b) < eps:
            break
        h_aa = float(np.dot(f * f, d1)) + sigma
        h_bb = float(np.sum(d1)) + sigma
        h_ab = float(np.dot(f, d1))
        det = h_aa * h_bb - h_ab * h_ab
        if det <= 0:
            break
        step_a = -(h_bb * g_a - h_ab * g_b) / det
        step_b = -(h_aa * g_b - h_ab * g_a) / det
        stepsize = 1.0
        while stepsize >= 1e-10:
            new_a = a + stepsize * step_a
            new_b = b + stepsize * step_b
            new_f = _fval(new_a, new_b)
            if new_f < fval + 1e-4 * stepsize * (g_a * step_a + g_b * step_b):
                a, b, fval = new_a, new_b, new_f
                break
            stepsize /= 2.0
        else:
            break
    return float(a), float(b)


def platt_probability(decision_values, a: float, b: float) -> np.ndarray:
    z = a * np.asarray(decision_values, dtype=float) + b
    return np.where(z >= 0, np.exp(-z) / (1.0 + np.exp(-z)), 1.0 / (1.0 + np.exp(z)))


def _contiguous_folds(n: int, k: int):
    sizes = np.full(k, n // k)
    sizes[: n % k] += 1
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    return [np.arange(bounds[i], bounds[i + 1]) for i in range(k)]


class RbfSvm(BaseEstimator, ClassifierMixin):
    """RBF-kernel SVM with SMO training and Platt probability calibration.

    Parameters mirror the usual estimator conventions; ``calibrate=False``
    skips the internal 3-fold calibration (used during grid search where
    only decision values are needed).
    """

    def __init__(self, gamma=1.0, C=1.0, tol=DEFAULT_TOL,
                 kernel_eval_budget=DEFAULT_KERNEL_EVAL_BUDGET,
                 calibrate=True, calibration_folds=3):
        self.gamma = gamma
        self.C = C
        self.tol = tol
        self.kernel_eval_budget = kernel_eval_budget
        self.calibrate = calibrate
        self.calibration_folds = calibration_folds

    def _validate(self, X, y):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2:
            raise DataError("X must be a 2-d feature matrix")
        if not np.isfinite(X).all():
            raise DataError("non-finite feature values")
        y = np.asarray(y)
        y = np.where(y > 0, 1.0, -1.0).astype(float)
        if np.unique(y).size < 2:
            raise DataError("training data contains a single class")
        return X, y

    def fit(self, X, y):
        X, y = self._validate(X, y)
        K = rbf_kernel(X, X, self.gamma)
        alpha, b, dual_obj, n_iter, converged = smo_solve(
            K, y, self.C, self.tol, self.kernel_eval_budget
        )
        sv = alpha > _SV_EPS
        self.support_vectors_ = X[sv]
        self.dual_coef_ = alpha[sv] * y[sv]
        self.alpha_ = alpha
        self.intercept_ = float(b)
        self.dual_objective_ = float(dual_obj)
        self.n_iter_ = int(n_iter)
        self.converged_ = bool(converged)
        self.n_features_in_ = X.shape[1]
        self._train_X = X
        self._train_y = y
        self._train_K = K

        if self.calibrate:
            dec, labels = self._calibration_decision_values(X, y)
            self.platt_a_, self.platt_b_ = fit_platt_sigmoid(dec, labels)
        else:
            self.platt_a_, self.platt_b_ = None, None
        return self

    def _calibration_decision_values(self, X, y):
        n = X.shape[0]
        folds = _contiguous_folds(n, self.calibration_folds)
        usable = all(np.unique(y[np.setdiff1d(np.arange(n), f)]).size == 2 for f in folds)
        if not usable or n < 2 * self.calibration_folds:
            log.warning("Platt calibration falling back to training decision values")
            return self.decision_function(X), y
        dec = np.empty(n)
        for fold in folds:
            train = np.setdiff1d(np.arange(n), fold)
            K_tr = self._train_K[np.ix_(train, train)]
            alpha, b, *_ = smo_solve(K_tr, y[train], self.C, self.tol, self.kernel_eval_budget)
            K_cross = self._train_K[np.ix_(fold, train)]
            dec[fold] = K_cross @ (alpha * y[train]) + b
        return dec, y

    def decision_function(self, X):
        X = np.asarray(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise DataError(
                f"feature dimensionality {X.shape[1]} does not match training "
                f"dimensionality {self.n_features_in_}"
            )
        if self.support_vectors_.shape[0] == 0:
            return np.full(X.shape[0], self.intercept_)
        K = rbf_kernel(X, self.support_vectors_, self.gamma)
        return K @ self.dual_coef_ + self.intercept_

    def predict(self, X):
        return np.where(self.decision_function(X) >= 0.0, 1, -1)

    def predict_proba(self, X):
        """[n x 2] class probabilities (column 1 = positive class)."""
        if self.platt_a_ is None:
            raise DataError("model was fitted with calibrate=False")
        p_pos = platt_probability(self.decision_function(X), self.platt_a_, self.platt_b_)
        return np.column_stack([1.0 - p_pos, p_pos])

    def positive_probability(self, X):
        return self.predict_proba(X)[:, 1]

    def kkt_violation(self) -> float:
        """Maximal violating-pair gap on the training set (0 at optimality)."""
        y = self._train_y
        grad = (self._train_K * np.outer(y, y)) @ self.alpha_ - 1.0
        up = ((y > 0) & (self.alpha_ < self.C - _SV_EPS)) | ((y < 0) & (self.alpha_ > _SV_EPS))
        low = ((y > 0) & (self.alpha_ > _SV_EPS)) | ((y < 0) & (self.alpha_ < self.C - _SV_EPS))
        if not up.any() or not low.any():
            return 0.0
        return float((-y[up] * grad[up]).max() - (-y[low] * grad[low]).min())
