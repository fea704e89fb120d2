"""Window- and trial-level performance metrics and statistical tests.

The trial-based metric counts a trial as correct only when none of its
relaxation windows is predicted positive and at least one pre-movement
window is; detection latency is the center time of the first true-positive
window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats as sstats

from .errors import DataError
from .features import WindowSpec, make_windows


@dataclass(frozen=True)
class RocCurve:
    points: tuple[tuple[float, float, float], ...]  # (fpr, tpr, threshold)
    auc: float


@dataclass(frozen=True)
class TrialOutcome:
    trial_index: int
    window_flags: tuple[bool, ...]
    correct: bool
    first_tp_window: int | None = None  # 1-based
    detection_time_s: float | None = None


def roc_auc(scores, labels) -> RocCurve:
    """ROC curve by threshold sweep over the distinct scores; AUC by trapezoid.

    ``labels`` are boolean/+-1 with the pre-movement class positive. Tied
    scores are grouped into a single ROC point.
    """
    scores = np.asarray(scores, dtype=float)
    labels = np.asarray(labels)
    pos = labels == True if labels.dtype == bool else labels > 0  # noqa: E712
    n_pos = int(pos.sum())
    n_neg = int(pos.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise DataError("roc_auc requires both classes present")
    order = np.argsort(-scores, kind="stable")
    sorted_scores = scores[order]
    sorted_pos = pos[order]
    points = [(0.0, 0.0, float("inf"))]
    tp = fp = 0
    i = 0
    n = scores.size
    while i < n:
        j = i
        while j < n and sorted_scores[j] == sorted_scores[i]:
            j += 1
        tp += int(sorted_pos[i:j].sum())
        fp += (j - i) - int(sorted_pos[i:j].sum())
        points.append((fp / n_neg, tp / n_pos, float(sorted_scores[i])))
        i = j
    fprs = np.array([p[0] for p in points])
    tprs = np.array([p[1] for p in points])
    auc = float(np.trapezoid(tprs, fprs))
    return RocCurve(points=tuple(points), auc=auc)


def cohens_kappa(confusion) -> float:
    """Cohen's kappa from a 2x2 confusion matrix [[TP, FN], [FP, TN]]."""
    confusion = np.asarray(confusion, dtype=float)
    total = confusion.sum()
    if total <= 0:
        raise DataError("cohens_kappa requires a non-empty confusion matrix")
    p_observed = np.trace(confusion) / total
    rows = confusion.sum(axis=1) / total
    cols = confusion.sum(axis=0) / total
    p_expected = float(rows @ cols)
    if p_expected >= 1.0:
        return 1.0 if p_observed >= 1.0 else 0.0
    return float((p_observed - p_expected) / (1.0 - p_expected))


def empirical_chance_level(n_windows: int, class_ratio: float, alpha: float = 0.05) -> float:
    """Smallest accuracy (in %) a label-independent classifier exceeds with
    probability below ``alpha`` under a binomial null at the majority-class
    rate."""
    if n_windows <= 0:
        raise DataError("n_windows must be positive")
    if not 0.0 <= class_ratio <= 1.0:
        raise DataError("class_ratio must lie in [0, 1]")
    p = max(class_ratio, 1.0 - class_ratio)
    ks = np.arange(n_windows + 1)
    tail = sstats.binom.sf(ks - 1, n_windows, p)  # P(X >= k)
    achievable = ks[tail <= alpha]
    # smallest correct-count not reachable by chance; may be unattainable (100%)
    k = int(achievable[0]) if achievable.size else n_windows
    return 100.0 * k / n_windows


def trial_correctness(window_flags, labels, trial_index: int = -1,
                      spec: WindowSpec | None = None) -> TrialOutcome:
    """Evaluate one trial: correct iff no relaxation window is flagged and at
    least one pre-movement window is."""
    spec = spec or WindowSpec()
    flags = np.asarray(window_flags, dtype=bool)
    labels = np.asarray(labels, dtype=bool)
    if flags.size != spec.n_windows or labels.size != spec.n_windows:
        raise DataError(
            f"expected {spec.n_windows} windows, got {flags.size} flags / {labels.size} labels"
        )
    false_positive = flags & ~labels
    true_positive = flags & labels
    correct = (not false_positive.any()) and bool(true_positive.any())
    first_tp = None
    if true_positive.any():
        first_tp = int(np.flatnonzero(true_positive)[0]) + 1
    return TrialOutcome(
        trial_index=trial_index,
        window_flags=tuple(bool(f) for f in flags),
        correct=correct,
        first_tp_window=first_tp,
        detection_time_s=detection_time_of_window(first_tp, spec) if correct else None,
    )


def detection_time_of_window(window_index: int, spec: WindowSpec | None = None) -> float:
    """Center time of a (1-based) window relative to movement onset."""
    spec = spec or WindowSpec()
    windows = make_windows(spec.epoch_span_s[1] - spec.epoch_span_s[0], spec)
    if not 1 <= window_index <= len(windows):
        raise DataError(f"window index {window_index} out of range 1..{len(windows)}")
    return windows[window_index - 1][2]


def detection_time(outcome: TrialOutcome, spec: WindowSpec | None = None) -> float:
    """Detection latency of a correct trial (negative = before onset)."""
    if not outcome.correct:
        raise DataError("detection_time is only defined for correct trials")
    return detection_time_of_window(outcome.first_tp_window, spec)


def wilcoxon_signed_rank(x, y):
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are removed; the exact null distribution is used for
    n <= 25 without ties, otherwise the normal approximation with tie
    correction. Returns (statistic, p_value).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("wilcoxon_signed_rank requires paired 1-d samples")
    diffs = x - y
    diffs = diffs[diffs != 0.0]
    if diffs.size == 0:
        raise DataError("degenerate pairs: all differences are zero")
    if diffs.size < 5:
        raise DataError("need at least 5 non-zero differences")
    has_ties = np.unique(np.abs(diffs)).size < diffs.size
    method = "exact" if (diffs.size <= 25 and not has_ties) else "approx"
    res = sstats.wilcoxon(diffs, alternative="two-sided", method=method, correction=False)
    return float(res.statistic), float(res.pvalue)


def bonferroni_holm(p_values, alpha: float = 0.05):
    """Step-down Holm correction; returns [(adjusted_p, rejected)] in input order."""
    p_values = np.asarray(p_values, dtype=float)
    if p_values.size == 0:
        return []
    if ((p_values < 0) | (p_values > 1)).any():
        raise DataError("p-values must lie in [0, 1]")
    m = p_values.size
    order = np.argsort(p_values, kind="stable")
    adjusted = np.empty(m)
    running = 0.0
    for rank, idx in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p_values[idx]))
        adjusted[idx] = running
    return [(float(adj), bool(adj <= alpha)) for adj in adjusted]
