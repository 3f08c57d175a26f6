"""Evaluation metrics: EER against a brute-force oracle, the disentanglement
gap, PCA traversal identities, probe metrics against exhaustive enumeration,
and report round trips."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seqdae.errors import ContractViolation, DomainError
from seqdae.metrics import (PairList, TraversalSpec, VerificationTrial, auprc,
                            auroc, build_pair_list, compute_eer, cosine_trials,
                            disentanglement_gap, fit_traversal, pca_traverse)
from seqdae.report import MetricsReport


def _trials(scores, labels):
    return [VerificationTrial(float(s), bool(m)) for s, m in zip(scores, labels)]


def brute_force_eer(scores, labels):
    """Exhaustive threshold enumeration, written independently of compute_eer.

    Walks every operating point (thresholds at each distinct score plus one
    above the maximum), tabulates FPR/FNR by explicit counting, and solves
    the linear interpolation between the two points where FNR - FPR changes
    sign.
    """
    scores = list(map(float, scores))
    labels = list(map(bool, labels))
    n_same = sum(labels)
    n_diff = len(labels) - n_same
    thresholds = sorted(set(scores), reverse=True)
    points = [(0.0, 1.0)]  # threshold above max: accept nothing
    for theta in thresholds:
        fp = sum(1 for s, m in zip(scores, labels) if not m and s >= theta)
        fn = sum(1 for s, m in zip(scores, labels) if m and s < theta)
        points.append((fp / n_diff, fn / n_same))
    prev = points[0]
    for cur in points[1:]:
        d_prev = prev[1] - prev[0]
        d_cur = cur[1] - cur[0]
        if d_cur <= 0.0:
            if d_cur == 0.0 and d_prev > 0.0:
                return cur[0]
            frac = d_prev / (d_prev - d_cur)
            return prev[0] + frac * (cur[0] - prev[0])
        prev = cur
    return prev[0]


class TestComputeEER:
    def test_perfectly_separated_is_zero(self):
        trials = _trials([0.9, 0.8, 0.2, 0.1], [True, True, False, False])
        assert compute_eer(trials) == 0.0

    def test_random_scores_near_half(self):
        rng = np.random.default_rng(0)
        scores = rng.normal(0, 1, 10_000)
        labels = rng.random(10_000) < 0.5
        assert compute_eer(_trials(scores, labels)) == pytest.approx(0.5, abs=0.03)

    def test_hand_built_six_trial_case(self):
        scores = [0.9, 0.7, 0.6, 0.5, 0.3, 0.1]
        labels = [True, True, False, True, False, False]
        got = compute_eer(_trials(scores, labels))
        assert got == pytest.approx(brute_force_eer(scores, labels), abs=1e-12)
        # one same below 0.6 and one diff above 0.5: EER crosses at 1/3
        assert got == pytest.approx(1.0 / 3.0, abs=1e-9)

    def test_matches_brute_force_on_200_random_sets(self):
        rng = np.random.default_rng(42)
        for _ in range(200):
            n = int(rng.integers(4, 1000))
            labels = rng.random(n) < rng.uniform(0.2, 0.8)
            if labels.all() or (~labels).all():
                continue
            mode = rng.integers(3)
            if mode == 0:
                scores = rng.normal(labels.astype(float), 1.0)
            elif mode == 1:
                scores = rng.integers(0, 6, n).astype(float)  # heavy ties
            else:
                scores = rng.normal(0, 1, n)
            got = compute_eer(_trials(scores, labels))
            want = brute_force_eer(scores, labels)
            assert got == pytest.approx(want, abs=1e-9)

    def test_single_class_rejected(self):
        with pytest.raises(ContractViolation):
            compute_eer(_trials([0.3, 0.4], [True, True]))

    @given(st.floats(min_value=0.1, max_value=5.0),
           st.floats(min_value=-2.0, max_value=2.0))
    @settings(max_examples=30, deadline=None)
    def test_invariant_under_monotone_transform(self, scale, shift):
        rng = np.random.default_rng(7)
        scores = rng.normal(0, 1, 400)
        labels = rng.normal(0, 1, 400) + scores > 0.3
        if labels.all() or (~labels).all():
            return
        base = compute_eer(_trials(scores, labels))
        mapped = compute_eer(_trials(np.tanh(scale * scores) + shift, labels))
        assert mapped == pytest.approx(base, abs=1e-12)


class TestDisentanglementGap:
    def test_idealized_disentanglement(self):
        rng = np.random.default_rng(0)
        ids = np.repeat(np.arange(8), 16)
        static = np.eye(8)[ids] + rng.normal(0, 0.01, (128, 8))
        dynamic = rng.normal(0, 1, (128, 5, 4))
        s_eer, d_eer, gap = disentanglement_gap(static, dynamic, ids)
        assert s_eer == pytest.approx(0.0, abs=0.02)
        assert d_eer == pytest.approx(0.5, abs=0.06)
        assert gap == pytest.approx(0.5, abs=0.07)

    def test_equal_codes_give_zero_gap(self):
        rng = np.random.default_rng(1)
        ids = np.repeat(np.arange(4), 12)
        codes = rng.normal(0, 1, (48, 6))
        s_eer, d_eer, gap = disentanglement_gap(codes, codes[:, None, :], ids)
        assert gap == pytest.approx(0.0, abs=1e-12)
        assert s_eer == pytest.approx(d_eer, abs=1e-12)

    def test_swapped_arguments_negate_gap(self):
        rng = np.random.default_rng(2)
        ids = np.repeat(np.arange(6), 10)
        static = np.eye(6)[ids] + rng.normal(0, 0.05, (60, 6))
        dynamic = rng.normal(0, 1, (60, 4, 6))
        _, _, gap = disentanglement_gap(static, dynamic, ids)
        _, _, neg = disentanglement_gap(dynamic.mean(axis=1), static[:, None, :], ids)
        assert neg == pytest.approx(-gap, abs=1e-12)

    def test_needs_two_classes(self):
        with pytest.raises(ContractViolation):
            disentanglement_gap(np.zeros((4, 2)), np.zeros((4, 3, 2)), np.zeros(4))


class TestPCATraversal:
    def _pool(self, b=64, h=12, seed=0):
        return np.random.default_rng(seed).normal(0, 1, (b, h)) * \
            np.linspace(0.5, 2.0, h)

    def test_alpha_zero_recovers_exactly(self):
        pool = self._pool()
        s = pool[3]
        out = pca_traverse(s, pool, component=2, alpha=0.0)
        np.testing.assert_array_equal(out, s)

    def test_affine_in_alpha(self):
        pool = self._pool(seed=3)
        spec = fit_traversal(pool)
        s = pool[5]
        a1, a2 = 0.07, 0.11
        lhs = pca_traverse(s, spec, 1, a1) + pca_traverse(s, spec, 1, a2) \
            - pca_traverse(s, spec, 1, 0.0)
        rhs = pca_traverse(s, spec, 1, a1 + a2)
        np.testing.assert_allclose(lhs, rhs, atol=1e-8)

    def test_components_orthonormal(self):
        spec = fit_traversal(self._pool(b=256, h=16, seed=5))
        gram = spec.components @ spec.components.T
        np.testing.assert_allclose(gram, np.eye(len(gram)), atol=1e-6)

    def test_commutes_across_components(self):
        spec = fit_traversal(self._pool(seed=7))
        s = self._pool(seed=8)[0]
        a = pca_traverse(pca_traverse(s, spec, 0, 0.1), spec, 3, 0.1)
        b = pca_traverse(pca_traverse(s, spec, 3, 0.1), spec, 0, 0.1)
        np.testing.assert_allclose(a, b, atol=1e-10)

    def test_degenerate_dimension_clamped(self):
        pool = self._pool()
        pool[:, 4] = 1.25  # zero variance dimension
        spec = fit_traversal(pool)
        assert spec.std[4] == pytest.approx(1e-8)
        out = pca_traverse(pool[0], spec, 0, 0.05)
        assert np.isfinite(out).all()

    def test_pool_smaller_than_dim_rejected(self):
        with pytest.raises(ContractViolation):
            fit_traversal(np.zeros((4, 8)))

    def test_alpha_beyond_kappa_rejected(self):
        spec = fit_traversal(self._pool(), kappa=0.2)
        with pytest.raises(DomainError):
            pca_traverse(self._pool()[0], spec, 0, 0.5)

    def test_component_out_of_range(self):
        spec = fit_traversal(self._pool())
        with pytest.raises(DomainError):
            pca_traverse(self._pool()[0], spec, 99, 0.1)


def brute_force_auroc(scores, labels):
    """All-pairs enumeration: P(score_pos > score_neg) + 0.5 P(tie)."""
    pos = [s for s, l in zip(scores, labels) if l]
    neg = [s for s, l in zip(scores, labels) if not l]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def brute_force_auprc(scores, labels):
    """Average precision by explicit descending-threshold enumeration."""
    n_pos = sum(labels)
    thresholds = sorted(set(scores), reverse=True)
    ap = 0.0
    prev_recall = 0.0
    for theta in thresholds:
        tp = sum(1 for s, l in zip(scores, labels) if l and s >= theta)
        fp = sum(1 for s, l in zip(scores, labels) if not l and s >= theta)
        recall = tp / n_pos
        precision = tp / (tp + fp)
        ap += (recall - prev_recall) * precision
        prev_recall = recall
    return ap


class TestProbeMetrics:
    def test_auroc_auprc_against_enumeration_on_20_point_sets(self):
        rng = np.random.default_rng(3)
        for _ in range(80):
            labels = rng.random(20) < 0.4
            if labels.all() or (~labels).all():
                continue
            scores = np.round(rng.normal(0, 1, 20), 1)  # induce ties
            assert auroc(scores, labels) == pytest.approx(
                brute_force_auroc(scores, labels), abs=1e-12)
            assert auprc(scores, labels) == pytest.approx(
                brute_force_auprc(scores, labels), abs=1e-12)

    def test_perfect_ranking(self):
        labels = np.array([True] * 5 + [False] * 15)
        scores = -np.arange(20, dtype=float)
        assert auroc(scores, labels) == 1.0
        assert auprc(scores, labels) == 1.0

    def test_single_class_rejected(self):
        with pytest.raises(ContractViolation):
            auroc(np.ones(4), np.ones(4, dtype=bool))


class TestPairList:
    def test_persistence_roundtrip(self, tmp_path):
        pairs = build_pair_list(100, 16, seed=9)
        path = tmp_path / "pairs.json"
        pairs.save(path)
        back = PairList.load(path)
        np.testing.assert_array_equal(back.static_idx, pairs.static_idx)
        np.testing.assert_array_equal(back.dynamic_idx, pairs.dynamic_idx)
        assert back.seed == 9

    def test_fixed_given_seed(self):
        a = build_pair_list(50, 8, seed=3)
        b = build_pair_list(50, 8, seed=3)
        np.testing.assert_array_equal(a.static_idx, b.static_idx)


class TestMetricsReport:
    def test_text_roundtrip(self):
        report = MetricsReport(values={"eer.static": 0.0421875,
                                       "swap.n_pairs": 48,
                                       "eer.similarity": "cosine",
                                       "flag.ok": True},
                               seed=7, config_hash="abc123")
        back = MetricsReport.from_text(report.to_text())
        assert back.values == report.values
        assert back.seed == 7
        assert back.config_hash == "abc123"

    def test_serialization_is_sorted_and_stable(self):
        report = MetricsReport(values={"b": 2, "a": 1.5}, seed=0, config_hash="x")
        text = report.to_text()
        assert text == MetricsReport.from_text(text).to_text()
        lines = text.strip().splitlines()
        assert lines == sorted(lines)

    def test_float_roundtrip_exact(self):
        value = 0.1234567890123456789
        report = MetricsReport(values={"v": value})
        back = MetricsReport.from_text(report.to_text())
        assert back.values["v"] == value


class TestCosineTrials:
    def test_same_identity_marked(self):
        codes = np.eye(4)
        ids = np.array([0, 0, 1, 1])
        trials = cosine_trials(codes, ids)
        same = [t for t in trials if t.is_same]
        assert len(same) == 2
        assert len(trials) == 6
