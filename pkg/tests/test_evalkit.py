import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crossret.errors import DataError, DimensionError, ParameterError, ParseError
from crossret.evalkit import (
    GroundTruth,
    MetricsReport,
    cosine_similarity,
    gen_synthetic,
    load_ground_truth,
    mean_recall,
    metrics_report,
    recall_at_k,
    save_ground_truth,
)

import oracles


def one_to_one(n):
    return GroundTruth(n, n, tuple((i, i) for i in range(n)))


class TestRecall:
    def test_identity_dominant(self):
        s = np.eye(5) + 0.01
        assert recall_at_k(s, one_to_one(5), 1) == 100.0
        assert recall_at_k(s, one_to_one(5), 1, "t2i") == 100.0

    def test_relevant_ranked_last(self):
        s = 1 - np.eye(4)
        assert recall_at_k(s, one_to_one(4), 1) == 0.0
        assert recall_at_k(s, one_to_one(4), 4) == 100.0

    def test_matches_membership_oracle(self, rng):
        s = rng.standard_normal((20, 100))
        gt = GroundTruth(20, 100, tuple((t // 5, t) for t in range(100)))
        rel = set(gt.pairs)
        for k in (1, 5, 10):
            assert recall_at_k(s, gt, k) == pytest.approx(oracles.recall(s.tolist(), rel, k, True), abs=1e-12)
            assert recall_at_k(s, gt, k, "t2i") == pytest.approx(oracles.recall(s.tolist(), rel, k, False), abs=1e-12)

    def test_ties_go_to_smaller_index(self):
        s = np.zeros((2, 2))
        assert recall_at_k(s, one_to_one(2), 1) == 50.0

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_monotone_in_k(self, seed):
        r = np.random.default_rng(seed)
        s = r.standard_normal((8, 16))
        gt = GroundTruth(8, 16, tuple((t % 8, t) for t in range(16)))
        for direction, n in (("i2t", 16), ("t2i", 8)):
            vals = [recall_at_k(s, gt, k, direction) for k in range(1, n + 1)]
            assert all(a <= b for a, b in zip(vals, vals[1:]))

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 2**31 - 1))
    def test_invariant_under_increasing_maps(self, seed):
        r = np.random.default_rng(seed)
        s = r.uniform(-1, 1, (12, 24))
        gt = GroundTruth(12, 24, tuple((t % 12, t) for t in range(24)))
        base = metrics_report(s, gt)
        for g in (lambda x: (x + 1) / 2, np.exp, lambda x: x ** 3 + 5):
            assert metrics_report(g(s), gt) == base

    def test_errors(self):
        with pytest.raises(ParameterError):
            recall_at_k(np.eye(3), one_to_one(3), 4)
        with pytest.raises(DimensionError):
            recall_at_k(np.eye(3), one_to_one(4), 1)


class TestMeanRecall:
    def test_simple(self):
        assert mean_recall([100] * 6) == 100.0
        assert mean_recall([0, 0, 0, 100, 100, 100]) == 50.0
        assert mean_recall([37.5] * 6) == 37.5

    def test_reference_sextuple(self):
        assert abs(mean_recall((19.13, 42.36, 54.74, 15.67, 44.32, 60.51)) - 39.46) < 0.01

    def test_errors(self):
        with pytest.raises(DataError):
            mean_recall([10] * 5)
        with pytest.raises(DataError):
            mean_recall([10, 20, 30, 40, 50, 101])

    def test_report_formats(self):
        rep = MetricsReport(10, 20, 30, 40, 50, 60)
        assert rep.mr == 35.0
        lines = rep.table().splitlines()
        assert lines[0].split() == list(MetricsReport.HEADER)
        assert lines[1].split()[-1] == "35.00"
        assert rep.csv().splitlines()[1] == "10.0,20.0,30.0,40.0,50.0,60.0,35.0"


class TestGroundTruth:
    def test_two_lines(self, tmp_path):
        p = tmp_path / "gt.tsv"
        p.write_text("0\t0\n0\t1\n")
        gt = load_ground_truth(p)
        assert gt.texts_of(0) == {0, 1}
        assert (gt.n_images, gt.n_texts) == (1, 2)

    def test_duplicate(self, tmp_path):
        p = tmp_path / "gt.tsv"
        p.write_text("0\t0\n0\t0\n")
        with pytest.raises(DataError):
            load_ground_truth(p)

    def test_malformed_line_number(self, tmp_path):
        p = tmp_path / "gt.tsv"
        p.write_text("0\t0\n1 1\n")
        with pytest.raises(ParseError, match=":2:"):
            load_ground_truth(p)

    def test_non_dense_images(self, tmp_path):
        p = tmp_path / "gt.tsv"
        p.write_text("0\t0\n2\t1\n")
        with pytest.raises(DataError):
            load_ground_truth(p)

    def test_uncovered_text(self):
        with pytest.raises(DataError):
            GroundTruth(1, 3, ((0, 0), (0, 2)))

    def test_synthetic_roundtrip(self, tmp_path):
        _, _, gt = gen_synthetic(10, 5, 4, 0.1, 0)
        save_ground_truth(gt, tmp_path / "gt.tsv")
        assert load_ground_truth(tmp_path / "gt.tsv") == gt


class TestSynthetic:
    def test_noise_free_retrieval_is_perfect(self):
        F, G, gt = gen_synthetic(20, 5, 16, 0.0, 3)
        s = cosine_similarity(F, G)
        assert recall_at_k(s, gt, 1, "t2i") == 100.0
        assert recall_at_k(s, gt, 1, "i2t") == 100.0

    def test_shapes_and_owners(self):
        F, G, gt = gen_synthetic(7, 3, 5, 0.2, 1)
        assert F.shape == (7, 5) and G.shape == (21, 5)
        assert gt.texts_of(2) == {6, 7, 8}
        np.testing.assert_allclose(np.linalg.norm(G, axis=1), 1.0)

    def test_deterministic(self):
        a = gen_synthetic(5, 5, 8, 0.3, 11, hub=0.2)
        b = gen_synthetic(5, 5, 8, 0.3, 11, hub=0.2)
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])
        assert a[2] == b[2]

    def test_pure_noise_hits_chance_level(self):
        n_img, caps = 10, 5
        r1 = []
        for seed in range(100):
            F, G, gt = gen_synthetic(n_img, caps, 16, 1e6, seed)
            r1.append(recall_at_k(cosine_similarity(F, G), gt, 1, "t2i"))
        r1 = np.array(r1)
        sigma = r1.std(ddof=1) / np.sqrt(r1.size)
        assert abs(r1.mean() - 100.0 / n_img) < 3 * sigma

    def test_errors(self):
        with pytest.raises(ParameterError):
            gen_synthetic(3, 2, 1, 0.1, 0)
        with pytest.raises(ParameterError):
            gen_synthetic(3, 2, 4, -0.1, 0)
