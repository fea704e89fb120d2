"""Detector training: nested chronological cross-validation, grid search,
threshold selection, LDA fusion of the two feature views, and transfer
application of trained detectors.

Trials are never shuffled: outer and inner folds are contiguous
chronological blocks. Hyperparameters (gamma, C) are picked by a 5x5 grid
search on inner-fold window accuracy; the probability threshold is picked
on inner-validation predictions by maximizing the trial-based metric.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin

from .errors import DataError
from .features import WindowDataset
from .metrics import TrialOutcome, trial_correctness
from .svm import (DEFAULT_KERNEL_EVAL_BUDGET, DEFAULT_TOL, RbfSvm, rbf_kernel,
                  smo_solve, squared_distances)

KIND_AMPLITUDE = "amplitude"
KIND_PHASE = "phase"
KIND_MULTIVIEW = "amplitude_plus_phase"
DETECTOR_KINDS = (KIND_AMPLITUDE, KIND_PHASE, KIND_MULTIVIEW)

MODEL_SCHEMA_VERSION = 1
_LDA_RIDGE = 1e-6


class FisherLda(BaseEstimator, ClassifierMixin):
    """Two-class Fisher discriminant with pooled, lightly ridged covariance."""

    def fit(self, Z, y):
        Z = np.asarray(Z, dtype=float)
        y = np.asarray(y)
        y = np.where(y > 0, 1, -1)
        pos = Z[y > 0]
        neg = Z[y < 0]
        if len(pos) < 2 or len(neg) < 2:
            raise DataError("FisherLda requires at least 2 examples per class")
        mu_pos = pos.mean(axis=0)
        mu_neg = neg.mean(axis=0)
        n_pos, n_neg = len(pos), len(neg)
        cov = ((n_pos - 1) * np.cov(pos, rowvar=False, ddof=1)
               + (n_neg - 1) * np.cov(neg, rowvar=False, ddof=1)) / (n_pos + n_neg - 2)
        cov = np.atleast_2d(cov)
        dim = cov.shape[0]
        cov = cov + (_LDA_RIDGE * np.trace(cov) / dim) * np.eye(dim)
        self.covariance_ = cov
        self.class_means_ = np.vstack([mu_neg, mu_pos])
        self.coef_ = np.linalg.solve(cov, mu_pos - mu_neg)
        self.intercept_ = float(
            -0.5 * self.coef_ @ (mu_pos + mu_neg) + np.log(n_pos / n_neg)
        )
        return self

    def decision_function(self, Z):
        return np.asarray(Z, dtype=float) @ self.coef_ + self.intercept_

    def predict(self, Z):
        return np.where(self.decision_function(Z) >= 0, 1, -1)

    def positive_probability(self, Z):
        # equal-covariance Gaussian posterior is the logistic of the score
        return expit(self.decision_function(Z))


@dataclass(frozen=True)
class FoldPlan:
    """Contiguous chronological outer blocks with nested inner blocks."""

    outer_blocks: tuple  # tuple of int arrays of trial positions
    inner_blocks: tuple  # per outer fold: tuple of int arrays over the training pool

    @property
    def n_trials(self) -> int:
        return sum(len(b) for b in self.outer_blocks)


def _contiguous_split(positions: np.ndarray, k: int):
    if len(positions) < k:
        raise DataError(f"cannot split {len(positions)} trials into {k} blocks")
    return tuple(np.array_split(positions, k))


def make_fold_plan(n_trials: int, n_outer: int = 5, n_inner: int = 5) -> FoldPlan:
    """Nested chronological fold plan; block sizes differ by at most one."""
    if n_trials < 2 * n_outer:
        raise DataError(f"need at least {2 * n_outer} trials for {n_outer} outer folds")
    positions = np.arange(n_trials)
    outer = _contiguous_split(positions, n_outer)
    inner = []
    for k in range(n_outer):
        pool = np.concatenate([outer[i] for i in range(n_outer) if i != k])
        inner.append(_contiguous_split(pool, n_inner))
    return FoldPlan(outer_blocks=outer, inner_blocks=tuple(inner))


def grid_values(log2_min: float = -5.0, log2_max: float = 5.0, n_points: int = 5) -> np.ndarray:
    """Log-uniform grid axis, 2^log2_min .. 2^log2_max."""
    return 2.0 ** np.linspace(log2_min, log2_max, n_points)


@dataclass(frozen=True)
class _ViewArrays:
    X: np.ndarray
    y: np.ndarray
    trial_pos: np.ndarray
    window_idx: np.ndarray

    def windows_of_trials(self, trials) -> np.ndarray:
        mask = np.isin(self.trial_pos, trials)
        return np.flatnonzero(mask)


def _view_arrays(ds: WindowDataset) -> _ViewArrays:
    X, y, trial_pos, window_idx = ds.to_arrays()
    return _ViewArrays(X=X, y=y, trial_pos=trial_pos, window_idx=window_idx)


def _inner_splits(inner_blocks, strict_forward: bool):
    """(train_trials, val_trials) pairs for the inner loop."""
    splits = []
    for i, block in enumerate(inner_blocks):
        if strict_forward:
            if i == 0:
                continue
            train = np.concatenate(inner_blocks[:i])
        else:
            train = np.concatenate([inner_blocks[j] for j in range(len(inner_blocks)) if j != i])
        splits.append((train, block))
    if not splits:
        raise DataError("no usable inner splits")
    return splits


def grid_search(view: _ViewArrays, inner_blocks, gammas=None, Cs=None,
                strict_forward: bool = False, tol: float = DEFAULT_TOL,
                kernel_eval_budget: float = DEFAULT_KERNEL_EVAL_BUDGET):
    """Pick (gamma, C) maximizing mean inner-validation window accuracy.

    Ties break toward smaller C, then smaller gamma.
    """
    gammas = grid_values() if gammas is None else np.asarray(gammas, float)
    Cs = grid_values() if Cs is None else np.asarray(Cs, float)
    splits = _inner_splits(inner_blocks, strict_forward)
    acc = np.zeros((len(Cs), len(gammas)))
    for train_trials, val_trials in splits:
        tr = view.windows_of_trials(train_trials)
        va = view.windows_of_trials(val_trials)
        X_tr, y_tr = view.X[tr], view.y[tr]
        X_va, y_va = view.X[va], view.y[va]
        d_tr = squared_distances(X_tr, X_tr)
        d_va = squared_distances(X_va, X_tr)
        for gi, gamma in enumerate(gammas):
            K_tr = np.exp(-gamma * d_tr)
            K_va = np.exp(-gamma * d_va)
            for ci, C in enumerate(Cs):
                alpha, b, *_ = smo_solve(K_tr, y_tr, C, tol, kernel_eval_budget)
                dec = K_va @ (alpha * y_tr) + b
                acc[ci, gi] += float(np.mean(np.where(dec >= 0, 1, -1) == y_va))
    acc /= len(splits)
    best_ci, best_gi = 0, 0
    best = -1.0
    for ci in range(len(Cs)):
        for gi in range(len(gammas)):
            if acc[ci, gi] > best:
                best = acc[ci, gi]
                best_ci, best_gi = ci, gi
    return float(gammas[best_gi]), float(Cs[best_ci])


def select_threshold(trial_groups):
    """Threshold maximizing the trial-based metric on validation predictions.

    ``trial_groups`` is a list of (labels, probabilities) per trial, window
    order preserved. Candidates are every distinct probability plus 0 and 1;
    a window is flagged positive when p >= threshold. Ties resolve to the
    highest threshold.
    """
    if not trial_groups:
        raise DataError("select_threshold requires a non-empty validation set")
    p_tp, p_fp = [], []
    all_probs = [0.0, 1.0]
    for labels, probs in trial_groups:
        labels = np.asarray(labels, dtype=bool)
        probs = np.asarray(probs, dtype=float)
        all_probs.extend(probs.tolist())
        # a trial is correct at threshold t iff max prob over negative-label
        # windows < t <= max prob over positive-label windows
        p_tp.append(probs[labels].max() if labels.any() else -np.inf)
        p_fp.append(probs[~labels].max() if (~labels).any() else -np.inf)
    p_tp = np.asarray(p_tp)
    p_fp = np.asarray(p_fp)
    candidates = np.unique(np.asarray(all_probs))
    correct = ((p_fp[None, :] < candidates[:, None]) &
               (candidates[:, None] <= p_tp[None, :])).sum(axis=1)
    best = correct.max()
    return float(candidates[np.flatnonzero(correct == best)[-1]])


@dataclass(frozen=True)
class DetectorModel:
    """A trained detector: one or two calibrated SVMs, optional LDA fusion,
    and the decision threshold selected on validation data."""

    kind: str
    threshold: float
    svm_amplitude: RbfSvm | None = None
    svm_phase: RbfSvm | None = None
    fusion: FisherLda | None = None
    feature_config_hash: str = ""

    def positive_probability(self, amp_X: np.ndarray | None, phase_X: np.ndarray | None):
        if self.kind == KIND_AMPLITUDE:
            return self.svm_amplitude.positive_probability(amp_X)
        if self.kind == KIND_PHASE:
            return self.svm_phase.positive_probability(phase_X)
        z = np.column_stack([
            self.svm_amplitude.positive_probability(amp_X),
            self.svm_phase.positive_probability(phase_X),
        ])
        return self.fusion.positive_probability(z)

    def to_dict(self) -> dict:
        def svm_dict(m):
            if m is None:
                return None
            return {
                "gamma": m.gamma,
                "C": m.C,
                "support_vectors": m.support_vectors_.tolist(),
                "dual_coefficients": m.dual_coef_.tolist(),
                "bias": m.intercept_,
                "platt_a": m.platt_a_,
                "platt_b": m.platt_b_,
            }

        doc = {
            "schema_version": MODEL_SCHEMA_VERSION,
            "kind": self.kind,
            "threshold": self.threshold,
            "feature_config_hash": self.feature_config_hash,
            "svm_amplitude": svm_dict(self.svm_amplitude),
            "svm_phase": svm_dict(self.svm_phase),
            "fusion": None,
        }
        if self.fusion is not None:
            doc["fusion"] = {
                "weights": self.fusion.coef_.tolist(),
                "bias": self.fusion.intercept_,
                "class_means": self.fusion.class_means_.tolist(),
                "pooled_covariance": self.fusion.covariance_.tolist(),
            }
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "DetectorModel":
        if doc.get("schema_version") != MODEL_SCHEMA_VERSION:
            raise DataError(f"unsupported model schema version {doc.get('schema_version')}")

        def svm_from(d):
            if d is None:
                return None
            m = RbfSvm(gamma=d["gamma"], C=d["C"])
            m.support_vectors_ = np.asarray(d["support_vectors"], dtype=float)
            m.dual_coef_ = np.asarray(d["dual_coefficients"], dtype=float)
            m.intercept_ = float(d["bias"])
            m.platt_a_ = d["platt_a"]
            m.platt_b_ = d["platt_b"]
            m.n_features_in_ = m.support_vectors_.shape[1] if m.support_vectors_.size else 0
            return m

        fusion = None
        if doc.get("fusion") is not None:
            fusion = FisherLda()
            fusion.coef_ = np.asarray(doc["fusion"]["weights"], dtype=float)
            fusion.intercept_ = float(doc["fusion"]["bias"])
            fusion.class_means_ = np.asarray(doc["fusion"]["class_means"], dtype=float)
            fusion.covariance_ = np.asarray(doc["fusion"]["pooled_covariance"], dtype=float)
        return cls(
            kind=doc["kind"],
            threshold=float(doc["threshold"]),
            svm_amplitude=svm_from(doc.get("svm_amplitude")),
            svm_phase=svm_from(doc.get("svm_phase")),
            fusion=fusion,
            feature_config_hash=doc.get("feature_config_hash", ""),
        )

    def save(self, path: str) -> None:
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, sort_keys=True, indent=1)

    @classmethod
    def load(cls, path: str) -> "DetectorModel":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))


@dataclass(frozen=True)
class TrialPrediction:
    trial_position: int
    trial_index: int
    labels: tuple  # per-window booleans, chronological
    probabilities: np.ndarray
    outcome: TrialOutcome


@dataclass(frozen=True)
class DetectorResult:
    """Per-fold models and out-of-fold predictions for one detector kind."""

    kind: str
    fold_models: tuple
    fold_predictions: tuple  # tuple (per fold) of tuples of TrialPrediction
    fold_params: tuple  # per fold: dict with gamma/C per view and threshold

    def all_predictions(self):
        return [p for fold in self.fold_predictions for p in fold]


def feature_config_hash(ds_amp: WindowDataset, ds_phase: WindowDataset) -> str:
    payload = json.dumps(
        {
            "channels": list(ds_amp.channels),
            "amp_dim": ds_amp.n_features,
            "phase_dim": ds_phase.n_features,
            "spec": [ds_amp.spec.length_s, ds_amp.spec.step_s,
                     list(ds_amp.spec.epoch_span_s), ds_amp.spec.premovement_boundary_s],
        },
        sort_keys=True,
    )
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def _check_aligned(amp_ds: WindowDataset, phase_ds: WindowDataset):
    amp_ids = [t for t, _ in amp_ds.trials]
    phase_ids = [t for t, _ in phase_ds.trials]
    if amp_ids != phase_ids:
        raise DataError("amplitude and phase datasets are not aligned on trials")
    if amp_ds.spec != phase_ds.spec:
        raise DataError("amplitude and phase datasets use different window specs")


@dataclass
class _ViewFold:
    """Everything one view contributes to one outer fold."""

    gamma: float
    C: float
    model: RbfSvm  # fitted on the full training pool
    val_trials: np.ndarray  # inner-validation trial positions (pooled, ordered)
    val_probs: dict  # trial position -> per-window probabilities
    val_labels: dict  # trial position -> per-window boolean labels


def _fit_view_fold(view: _ViewArrays, pool_trials, inner_blocks, strict_forward,
                   tol, kernel_eval_budget) -> _ViewFold:
    gamma, C = grid_search(view, inner_blocks, strict_forward=strict_forward,
                           tol=tol, kernel_eval_budget=kernel_eval_budget)
    val_probs: dict[int, np.ndarray] = {}
    val_labels: dict[int, np.ndarray] = {}
    for train_trials, val_trials in _inner_splits(inner_blocks, strict_forward):
        tr = view.windows_of_trials(train_trials)
        svm = RbfSvm(gamma=gamma, C=C, tol=tol, kernel_eval_budget=kernel_eval_budget)
        svm.fit(view.X[tr], view.y[tr])
        for t in val_trials:
            w = view.windows_of_trials([t])
            val_probs[int(t)] = svm.positive_probability(view.X[w])
            val_labels[int(t)] = view.y[w] > 0
    pool_w = view.windows_of_trials(pool_trials)
    final = RbfSvm(gamma=gamma, C=C, tol=tol, kernel_eval_budget=kernel_eval_budget)
    final.fit(view.X[pool_w], view.y[pool_w])
    _release_cache(final)
    ordered = np.asarray(sorted(val_probs.keys()))
    return _ViewFold(gamma=gamma, C=C, model=final, val_trials=ordered,
                     val_probs=val_probs, val_labels=val_labels)


def _release_cache(svm: RbfSvm) -> None:
    # keep serialized size and inter-process transfer small
    for attr in ("_train_X", "_train_y", "_train_K", "alpha_"):
        if hasattr(svm, attr):
            delattr(svm, attr)


def _outer_pools(plan: FoldPlan, strict_forward: bool):
    pools = []
    for k in range(len(plan.outer_blocks)):
        if strict_forward:
            if k == 0:
                pools.append(None)
                continue
            pools.append(np.concatenate(plan.outer_blocks[:k]))
        else:
            pools.append(np.concatenate(
                [plan.outer_blocks[i] for i in range(len(plan.outer_blocks)) if i != k]
            ))
    return pools


def _predict_trials(model: DetectorModel, amp: _ViewArrays, phase: _ViewArrays,
                    trials, trial_ids, spec) -> tuple:
    preds = []
    for t in trials:
        w_a = amp.windows_of_trials([t])
        probs = model.positive_probability(
            amp.X[w_a] if amp is not None else None,
            phase.X[phase.windows_of_trials([t])] if phase is not None else None,
        )
        labels = amp.y[w_a] > 0
        flags = probs >= model.threshold
        outcome = trial_correctness(flags, labels, trial_index=trial_ids[int(t)], spec=spec)
        preds.append(
            TrialPrediction(
                trial_position=int(t),
                trial_index=trial_ids[int(t)],
                labels=tuple(bool(v) for v in labels),
                probabilities=probs,
                outcome=outcome,
            )
        )
    return tuple(preds)


def _threshold_groups(view_fold: _ViewFold, probs_by_trial=None):
    groups = []
    for t in view_fold.val_trials:
        probs = probs_by_trial[int(t)] if probs_by_trial is not None else view_fold.val_probs[int(t)]
        groups.append((view_fold.val_labels[int(t)], probs))
    return groups


def _assemble_detector(kind: str, amp_fold: _ViewFold, phase_fold: _ViewFold,
                       config_hash: str) -> DetectorModel:
    if kind == KIND_AMPLITUDE:
        threshold = select_threshold(_threshold_groups(amp_fold))
        return DetectorModel(kind=kind, threshold=threshold,
                             svm_amplitude=amp_fold.model, feature_config_hash=config_hash)
    if kind == KIND_PHASE:
        threshold = select_threshold(_threshold_groups(phase_fold))
        return DetectorModel(kind=kind, threshold=threshold,
                             svm_phase=phase_fold.model, feature_config_hash=config_hash)
    if kind != KIND_MULTIVIEW:
        raise DataError(f"unknown detector kind {kind!r}")
    # stack the two views' validation probabilities as 2-d LDA inputs
    z_rows, z_labels = [], []
    for t in amp_fold.val_trials:
        z_rows.append(np.column_stack([amp_fold.val_probs[int(t)], phase_fold.val_probs[int(t)]]))
        z_labels.append(amp_fold.val_labels[int(t)])
    lda = FisherLda().fit(np.vstack(z_rows), np.concatenate(z_labels).astype(int) * 2 - 1)
    fused_by_trial = {
        int(t): lda.positive_probability(
            np.column_stack([amp_fold.val_probs[int(t)], phase_fold.val_probs[int(t)]])
        )
        for t in amp_fold.val_trials
    }
    threshold = select_threshold(_threshold_groups(amp_fold, fused_by_trial))
    return DetectorModel(kind=kind, threshold=threshold, svm_amplitude=amp_fold.model,
                         svm_phase=phase_fold.model, fusion=lda, feature_config_hash=config_hash)


def train_all_detectors(amp_ds: WindowDataset, phase_ds: WindowDataset,
                        fold_plan: FoldPlan | None = None, kinds=DETECTOR_KINDS,
                        strict_forward: bool = False, tol: float = DEFAULT_TOL,
                        kernel_eval_budget: float = DEFAULT_KERNEL_EVAL_BUDGET,
                        n_jobs: int = 1) -> dict:
    """Nested-CV training of the requested detector kinds.

    The per-view, per-fold work (grid search, inner fits, final fit) is
    computed once and shared by the single-view and fused detectors.
    """
    _check_aligned(amp_ds, phase_ds)
    if fold_plan is None:
        fold_plan = make_fold_plan(amp_ds.n_trials)
    amp = _view_arrays(amp_ds)
    phase = _view_arrays(phase_ds)
    trial_ids = [t for t, _ in amp_ds.trials]
    config_hash = feature_config_hash(amp_ds, phase_ds)
    pools = _outer_pools(fold_plan, strict_forward)

    need_amp = KIND_AMPLITUDE in kinds or KIND_MULTIVIEW in kinds
    need_phase = KIND_PHASE in kinds or KIND_MULTIVIEW in kinds
    tasks = []
    for k, pool in enumerate(pools):
        if pool is None:
            continue
        if need_amp:
            tasks.append((k, "amp", amp, pool, fold_plan.inner_blocks[k]))
        if need_phase:
            tasks.append((k, "phase", phase, pool, fold_plan.inner_blocks[k]))
    results = Parallel(n_jobs=n_jobs)(
        delayed(_fit_view_fold)(view, pool, inner, strict_forward, tol, kernel_eval_budget)
        for _k, _name, view, pool, inner in tasks
    )
    view_folds: dict[tuple[int, str], _ViewFold] = {
        (k, name): res for (k, name, *_), res in zip(tasks, results)
    }

    out = {}
    for kind in kinds:
        fold_models, fold_preds, fold_params = [], [], []
        for k, pool in enumerate(pools):
            if pool is None:
                continue
            amp_fold = view_folds.get((k, "amp"))
            phase_fold = view_folds.get((k, "phase"))
            model = _assemble_detector(kind, amp_fold, phase_fold, config_hash)
            preds = _predict_trials(model, amp, phase, fold_plan.outer_blocks[k],
                                    trial_ids, amp_ds.spec)
            fold_models.append(model)
            fold_preds.append(preds)
            params = {"threshold": model.threshold}
            if model.svm_amplitude is not None:
                params["amplitude"] = {"gamma": amp_fold.gamma, "C": amp_fold.C}
            if model.svm_phase is not None:
                params["phase"] = {"gamma": phase_fold.gamma, "C": phase_fold.C}
            fold_params.append(params)
        out[kind] = DetectorResult(kind=kind, fold_models=tuple(fold_models),
                                   fold_predictions=tuple(fold_preds),
                                   fold_params=tuple(fold_params))
    return out


def train_detector(kind: str, amp_ds: WindowDataset, phase_ds: WindowDataset,
                   fold_plan: FoldPlan | None = None, **kwargs) -> DetectorResult:
    """Nested-CV training of one detector kind; see ``train_all_detectors``."""
    if kind not in DETECTOR_KINDS:
        raise DataError(f"unknown detector kind {kind!r}")
    return train_all_detectors(amp_ds, phase_ds, fold_plan, kinds=(kind,), **kwargs)[kind]


def fit_full_detector(kind: str, amp_ds: WindowDataset, phase_ds: WindowDataset,
                      n_folds: int = 5, strict_forward: bool = False,
                      tol: float = DEFAULT_TOL,
                      kernel_eval_budget: float = DEFAULT_KERNEL_EVAL_BUDGET,
                      n_jobs: int = 1) -> DetectorModel:
    """One deployable detector trained on a full source dataset.

    Grid search and threshold selection run inside a chronological
    ``n_folds``-fold split of the source; the final SVMs are fitted on all
    source trials.
    """
    _check_aligned(amp_ds, phase_ds)
    amp = _view_arrays(amp_ds)
    phase = _view_arrays(phase_ds)
    positions = np.arange(amp_ds.n_trials)
    inner_blocks = _contiguous_split(positions, n_folds)
    config_hash = feature_config_hash(amp_ds, phase_ds)
    need = {
        KIND_AMPLITUDE: ("amp",),
        KIND_PHASE: ("phase",),
        KIND_MULTIVIEW: ("amp", "phase"),
    }[kind]
    views = {"amp": amp, "phase": phase}
    jobs = [(name, views[name]) for name in need]
    fitted = Parallel(n_jobs=n_jobs)(
        delayed(_fit_view_fold)(view, positions, inner_blocks, strict_forward,
                                tol, kernel_eval_budget)
        for _name, view in jobs
    )
    folds = {name: res for (name, _), res in zip(jobs, fitted)}
    return _assemble_detector(kind, folds.get("amp"), folds.get("phase"), config_hash)


def transfer_evaluate(model: DetectorModel, amp_ds: WindowDataset,
                      phase_ds: WindowDataset) -> tuple:
    """Apply a trained detector to a full dataset without any refitting."""
    _check_aligned(amp_ds, phase_ds)
    amp = _view_arrays(amp_ds)
    phase = _view_arrays(phase_ds)
    expected = feature_config_hash(amp_ds, phase_ds)
    if model.feature_config_hash and model.feature_config_hash != expected:
        raise DataError("feature configuration of the dataset does not match the model")
    trial_ids = [t for t, _ in amp_ds.trials]
    return _predict_trials(model, amp, phase, np.arange(amp_ds.n_trials),
                           trial_ids, amp_ds.spec)
