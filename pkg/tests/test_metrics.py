import numpy as np
import pytest

from freqdetect.metrics import accuracy, domain_breakdown, roc_auc


def auc_pair_counting(scores, labels):
    """Oracle: exhaustive positive/negative pair comparison, ties half credit."""
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels)
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    if pos.size == 0 or neg.size == 0:
        return None
    total = 0.0
    for p in pos:
        for n in neg:
            if p > n:
                total += 1.0
            elif p == n:
                total += 0.5
    return total / (pos.size * neg.size)


class TestAccuracy:
    def test_hand_case(self):
        scores = np.array([0.9, 0.2, 0.6, 0.4])
        labels = np.array([1, 0, 0, 1])
        # predictions 1,0,1,0 -> two right, two wrong
        assert accuracy(scores, labels) == 0.5

    def test_threshold_is_inclusive(self):
        assert accuracy(np.array([0.5]), np.array([1])) == 1.0
        assert accuracy(np.array([0.5]), np.array([0])) == 0.0

    def test_custom_threshold(self):
        scores = np.array([0.1, 0.3])
        labels = np.array([0, 1])
        assert accuracy(scores, labels, threshold=0.2) == 1.0

    def test_all_correct_and_all_wrong(self):
        scores = np.array([0.99, 0.01])
        assert accuracy(scores, np.array([1, 0])) == 1.0
        assert accuracy(scores, np.array([0, 1])) == 0.0

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            accuracy(np.zeros(3), np.zeros(4))

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            accuracy(np.zeros(0), np.zeros(0))


class TestRocAuc:
    def test_hand_case_with_ties(self):
        # Seven samples, one tied pair across classes.
        scores = np.array([0.1, 0.4, 0.35, 0.8, 0.35, 0.9, 0.5])
        labels = np.array([0, 0, 1, 1, 0, 1, 0])
        got = roc_auc(scores, labels)
        want = auc_pair_counting(scores, labels)
        assert got == want
        # pairs: pos {0.35, 0.8, 0.9} vs neg {0.1, 0.4, 0.35, 0.5}
        # 0.35: >0.1, =0.35 -> 1.5; 0.8: all four -> 4; 0.9: all four -> 4
        assert got == 9.5 / 12.0

    def test_perfect_and_inverted(self):
        scores = np.array([0.1, 0.2, 0.8, 0.9])
        assert roc_auc(scores, np.array([0, 0, 1, 1])) == 1.0
        assert roc_auc(scores, np.array([1, 1, 0, 0])) == 0.0

    def test_constant_scores_give_half(self):
        assert roc_auc(np.full(6, 0.5), np.array([0, 1, 0, 1, 0, 1])) == 0.5

    def test_single_class_is_undefined(self):
        assert roc_auc(np.array([0.2, 0.7]), np.array([1, 1])) is None
        assert roc_auc(np.array([0.2, 0.7]), np.array([0, 0])) is None

    def test_matches_pair_counting_on_200_random_sets(self):
        rng = np.random.default_rng(60)
        for trial in range(200):
            n = int(rng.integers(2, 40))
            # quantized scores force plenty of exact ties
            scores = np.round(rng.random(n) * 4) / 4
            labels = rng.integers(0, 2, size=n)
            assert roc_auc(scores, labels) == auc_pair_counting(scores, labels), trial

    def test_rejects_shape_mismatch(self):
        with pytest.raises(ValueError):
            roc_auc(np.zeros((2, 2)), np.zeros((2, 2)))


class TestDomainBreakdown:
    def test_rows_mix_domain_fakes_with_all_reals(self):
        scores = np.array([0.1, 0.2, 0.9, 0.3, 0.8, 0.6])
        labels = np.array([0, 0, 1, 1, 1, 1])
        domains = np.array([-1, -1, 0, 0, 1, 1])
        table = domain_breakdown(scores, labels, domains)
        assert sorted(table) == [0, 1]
        real = labels == 0
        for d in (0, 1):
            keep = real | (domains == d)
            assert table[d]["acc"] == accuracy(scores[keep], labels[keep])
            assert table[d]["auc"] == auc_pair_counting(scores[keep], labels[keep])
            assert table[d]["n_fake"] == 2

    def test_no_reals_gives_undefined_auc(self):
        table = domain_breakdown(
            np.array([0.9, 0.8]), np.array([1, 1]), np.array([0, 0])
        )
        assert table[0]["auc"] is None
        assert table[0]["acc"] == 1.0

    def test_no_fakes_gives_empty_table(self):
        table = domain_breakdown(np.array([0.1]), np.array([0]), np.array([-1]))
        assert table == {}
