import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gaitdetect import metrics
from gaitdetect.errors import DataError
from gaitdetect.features import WindowSpec


def _pair_counting_auc(scores, labels):
    """AUC as P(score+ > score-) + 0.5 P(tie), enumerated over all pairs."""
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    wins = ties = 0
    for p in pos:
        for q in neg:
            if p > q:
                wins += 1
            elif p == q:
                ties += 1
    return (wins + 0.5 * ties) / (len(pos) * len(neg))


class TestRocAuc:
    def test_perfect_separation(self):
        scores = [0.9, 0.8, 0.2, 0.1]
        labels = [True, True, False, False]
        assert metrics.roc_auc(scores, labels).auc == 1.0

    def test_matches_pair_counting_oracle(self):
        rng = np.random.default_rng(0)
        for _ in range(100):
            n = int(rng.integers(4, 40))
            # quantized scores force ties
            scores = np.round(rng.uniform(0, 1, n), 1)
            labels = rng.uniform(size=n) < 0.5
            if labels.all() or not labels.any():
                labels[0] = True
                labels[-1] = False
            curve = metrics.roc_auc(scores, labels)
            assert curve.auc == pytest.approx(
                _pair_counting_auc(scores, labels), abs=1e-12)

    def test_curve_monotone(self):
        rng = np.random.default_rng(1)
        scores = rng.uniform(size=60)
        labels = rng.uniform(size=60) < 0.3
        labels[0] = True
        labels[1] = False
        pts = metrics.roc_auc(scores, labels).points
        fprs = [p[0] for p in pts]
        tprs = [p[1] for p in pts]
        assert fprs == sorted(fprs)
        assert tprs == sorted(tprs)
        assert pts[0][:2] == (0.0, 0.0)
        assert pts[-1][:2] == (1.0, 1.0)

    def test_chance_labels_near_half(self):
        rng = np.random.default_rng(2)
        scores = rng.uniform(size=5000)
        labels = rng.uniform(size=5000) < 0.5
        assert metrics.roc_auc(scores, labels).auc == pytest.approx(0.5, abs=0.05)

    def test_monotone_transform_invariance(self):
        rng = np.random.default_rng(3)
        scores = rng.uniform(size=50)
        labels = rng.uniform(size=50) < 0.4
        labels[0] = True
        labels[1] = False
        base = metrics.roc_auc(scores, labels).auc
        assert metrics.roc_auc(np.exp(3 * scores), labels).auc == pytest.approx(base, abs=1e-12)

    def test_single_class_rejected(self):
        with pytest.raises(DataError):
            metrics.roc_auc([0.1, 0.2], [True, True])


class TestCohensKappa:
    def test_perfect_agreement(self):
        assert metrics.cohens_kappa([[10, 0], [0, 10]]) == 1.0

    def test_chance_agreement(self):
        # confusion equal to the outer product of its marginals
        assert metrics.cohens_kappa([[9, 21], [21, 49]]) == pytest.approx(0.0, abs=1e-12)

    def test_hand_computed_case(self):
        assert metrics.cohens_kappa([[40, 10], [20, 30]]) == pytest.approx(0.40, abs=1e-12)

    def test_degenerate_single_cell(self):
        assert metrics.cohens_kappa([[10, 0], [0, 0]]) == 1.0
        assert metrics.cohens_kappa([[0, 10], [0, 0]]) == 0.0

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            metrics.cohens_kappa([[0, 0], [0, 0]])


class TestEmpiricalChanceLevel:
    def test_ten_windows_balanced(self):
        # P(X >= 9) ~ 0.0107 <= 0.05 < P(X >= 8) ~ 0.0547
        assert metrics.empirical_chance_level(10, 0.5) == pytest.approx(90.0)

    def test_large_n_approaches_majority_rate(self):
        level = metrics.empirical_chance_level(100000, 0.5)
        assert 50.0 < level < 51.0

    def test_matches_exact_binomial_tail(self):
        from scipy import stats
        for n, ratio in [(41, 33 / 41), (205, 33 / 41), (50, 0.5)]:
            level = metrics.empirical_chance_level(n, ratio)
            k = round(level / 100.0 * n)
            p = max(ratio, 1 - ratio)
            assert stats.binom.sf(k - 1, n, p) <= 0.05
            if k > 0:
                assert stats.binom.sf(k - 2, n, p) > 0.05

    def test_invalid_inputs(self):
        with pytest.raises(DataError):
            metrics.empirical_chance_level(0, 0.5)
        with pytest.raises(DataError):
            metrics.empirical_chance_level(10, 1.5)


def _default_labels():
    return np.array([False] * 33 + [True] * 8)


def _oracle_trial_correct(flags, labels):
    """Independent truth-table reading of the trial rule: conjunction of
    negated false positives over relax windows AND disjunction of true
    positives over pre-movement windows."""
    no_fp = all(not (f and not l) for f, l in zip(flags, labels))
    any_tp = any(f and l for f, l in zip(flags, labels))
    return no_fp and any_tp


class TestTrialCorrectness:
    def test_all_false_is_incorrect(self):
        out = metrics.trial_correctness([False] * 41, _default_labels())
        assert not out.correct
        assert out.detection_time_s is None

    def test_single_false_positive(self):
        flags = [False] * 41
        flags[11] = True  # window 12, a relax window
        assert not metrics.trial_correctness(flags, _default_labels()).correct

    def test_windows_35_and_40(self):
        flags = [False] * 41
        flags[34] = True  # window 35
        flags[39] = True  # window 40
        out = metrics.trial_correctness(flags, _default_labels())
        assert out.correct
        assert out.first_tp_window == 35

    def test_matches_oracle_on_random_patterns(self):
        rng = np.random.default_rng(42)
        labels = _default_labels()
        for _ in range(2000):
            flags = rng.uniform(size=41) < rng.uniform(0.02, 0.5)
            out = metrics.trial_correctness(flags, labels)
            assert out.correct == _oracle_trial_correct(flags, labels)

    def test_wrong_window_count(self):
        with pytest.raises(DataError):
            metrics.trial_correctness([False] * 40, [False] * 40)


class TestDetectionTime:
    def test_window_34_center(self):
        assert metrics.detection_time_of_window(34) == pytest.approx(-1.375)

    def test_window_41_center(self):
        assert metrics.detection_time_of_window(41) == pytest.approx(-0.5)

    def test_detection_time_of_correct_trial(self):
        flags = [False] * 41
        flags[33] = True  # window 34
        out = metrics.trial_correctness(flags, _default_labels())
        assert metrics.detection_time(out) == pytest.approx(-1.375)
        assert out.detection_time_s == pytest.approx(-1.375)

    def test_incorrect_trial_rejected(self):
        out = metrics.trial_correctness([False] * 41, _default_labels())
        with pytest.raises(DataError):
            metrics.detection_time(out)

    def test_out_of_range_index(self):
        with pytest.raises(DataError):
            metrics.detection_time_of_window(0)
        with pytest.raises(DataError):
            metrics.detection_time_of_window(42)


class TestWilcoxon:
    def test_pure_shift_exact_p(self):
        x = np.arange(10, dtype=float)
        y = x + np.linspace(1.0, 1.9, 10)  # all-positive, untied differences
        _stat, p = metrics.wilcoxon_signed_rank(y, x)
        assert p == pytest.approx(2.0 / 1024.0, abs=1e-12)

    def test_identical_pairs_degenerate(self):
        x = np.arange(8, dtype=float)
        with pytest.raises(DataError):
            metrics.wilcoxon_signed_rank(x, x.copy())

    def test_symmetric_differences_high_p(self):
        x = np.zeros(10)
        y = np.array([1.1, -1.2, 1.3, -1.4, 1.5, -1.6, 1.7, -1.8, 1.9, -2.0])
        _stat, p = metrics.wilcoxon_signed_rank(x, y)
        assert p > 0.5

    def test_too_few_pairs(self):
        with pytest.raises(DataError):
            metrics.wilcoxon_signed_rank([1.0, 2.0, 3.0, 4.0], [0.0, 0.0, 0.0, 0.0])


class TestBonferroniHolm:
    def test_single_p_unchanged(self):
        assert metrics.bonferroni_holm([0.02]) == [(0.02, True)]

    def test_hand_stepped_example(self):
        out = metrics.bonferroni_holm([0.01, 0.04, 0.03])
        assert [round(p, 10) for p, _ in out] == [0.03, 0.06, 0.06]
        assert [r for _, r in out] == [True, False, False]

    def test_all_zero(self):
        out = metrics.bonferroni_holm([0.0, 0.0, 0.0])
        assert all(r for _, r in out)

    def test_adjusted_at_least_raw(self):
        rng = np.random.default_rng(9)
        ps = rng.uniform(size=12)
        out = metrics.bonferroni_holm(ps)
        for (adj, _), raw in zip(out, ps):
            assert adj >= raw - 1e-15
            assert adj <= 1.0

    def test_out_of_range(self):
        with pytest.raises(DataError):
            metrics.bonferroni_holm([0.5, 1.5])

    @given(st.lists(st.floats(min_value=0.0, max_value=1.0), min_size=1, max_size=8))
    @settings(max_examples=50, deadline=None)
    def test_matches_stepdown_oracle(self, ps):
        out = metrics.bonferroni_holm(ps)
        m = len(ps)
        order = sorted(range(m), key=lambda i: ps[i])
        running = 0.0
        expected = [0.0] * m
        for rank, idx in enumerate(order):
            running = max(running, min(1.0, (m - rank) * ps[idx]))
            expected[idx] = running
        assert [p for p, _ in out] == pytest.approx(expected, abs=1e-12)
