import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from crossret.errors import DimensionError, NumericError, ParameterError
from crossret.smr import (
    SmrParams,
    extreme_diff_ratio,
    forward_weight,
    rank_topk,
    raw_rankings,
    reverse_weight,
    smr_rerank,
    to_positive,
    weight_map,
)

import oracles

FIXTURE = np.array([[0.9, 0.6], [0.5, 0.8]])

positive_matrices = st.tuples(st.integers(2, 7), st.integers(2, 7)).flatmap(
    lambda shape: arrays(np.float64, shape, elements=st.floats(0.05, 1.0))
)
# cosines on a 1/64 grid inside (-1, 1]: the (s + 1) / 2 remap is exact there,
# so ties are neither created nor broken by rounding
signed_matrices = st.tuples(st.integers(2, 6), st.integers(2, 6)).flatmap(
    lambda shape: arrays(np.float64, shape, elements=st.integers(-63, 64).map(lambda v: v / 64))
)


class TestFixture:
    def test_two_by_two_scores(self):
        # W = 0.5 + 0.9*0.5 + 1.9*2 = 4.75 -> 4.275 ; W = 0 + 0 + 1.9*(2/3 + 3/4) -> 1.615
        res = smr_rerank(FIXTURE, SmrParams(k=2))
        np.testing.assert_allclose(res.s_opt[0], [4.275, 1.615], rtol=1e-12)
        np.testing.assert_allclose(res.w_md[0], [2.0, 0.6 / 0.9 + 0.75], rtol=1e-12)
        np.testing.assert_array_equal(res.w_fwd[0], [0.5, 0.0])
        np.testing.assert_array_equal(res.w_rev[0], [0.5, 0.0])
        np.testing.assert_array_equal(res.rankings, [[0, 1], [1, 0]])

    def test_weight_map(self):
        p = SmrParams(k=2)
        res = smr_rerank(FIXTURE, p)
        np.testing.assert_allclose(weight_map(res, p)[0], [4.75, 1.9 * (0.6 / 0.9 + 0.75)])

    def test_building_blocks(self):
        assert rank_topk(FIXTURE, 0, 2) == [(0, 1), (1, 2)]
        assert rank_topk(FIXTURE, 1, 1, "t2i") == [(1, 1)]
        assert forward_weight(1, 2) == 0.5
        assert reverse_weight(FIXTURE, 1, 0) == 0.0
        assert reverse_weight(FIXTURE, 0, 0) == 0.5
        assert extreme_diff_ratio(FIXTURE, 1, 0) == pytest.approx(0.5 / 0.8 + 0.5 / 0.9)

    @settings(max_examples=60, deadline=None)
    @given(positive_matrices, st.data())
    def test_matches_loop_oracle(self, s, data):
        k = data.draw(st.integers(2, s.shape[1]))
        g1 = data.draw(st.floats(0, 2))
        g2 = data.draw(st.floats(0, 2))
        res = smr_rerank(s, SmrParams(k, g1, g2), positivity="never")
        for q in range(s.shape[0]):
            fwd, wf, wr, wm, so, final = oracles.smr_row(s.tolist(), q, k, g1, g2)
            np.testing.assert_array_equal(res.topk[q], fwd)
            np.testing.assert_allclose(res.w_fwd[q], wf, atol=1e-12)
            np.testing.assert_allclose(res.w_rev[q], wr, atol=1e-12)
            np.testing.assert_allclose(res.w_md[q], wm, atol=1e-12)
            np.testing.assert_allclose(res.s_opt[q, fwd], so, atol=1e-12)
            np.testing.assert_array_equal(res.rankings[q], final)


class TestProperties:
    @settings(max_examples=60, deadline=None)
    @given(signed_matrices, st.data())
    def test_topk_set_preserved_and_tail_fixed(self, s, data):
        k = data.draw(st.integers(2, s.shape[1]))
        res = smr_rerank(s, SmrParams(k=k))
        raw = raw_rankings(s)
        for q in range(s.shape[0]):
            assert sorted(res.rankings[q]) == list(range(s.shape[1]))
            assert set(res.rankings[q, :k]) == set(raw[q, :k])
            np.testing.assert_array_equal(res.rankings[q, k:], raw[q, k:])

    @settings(max_examples=40, deadline=None)
    @given(signed_matrices, st.data())
    def test_direction_symmetry(self, s, data):
        k = data.draw(st.integers(2, s.shape[0]))
        a = smr_rerank(s, SmrParams(k=k, direction="t2i"))
        b = smr_rerank(s.T, SmrParams(k=k, direction="i2t"))
        np.testing.assert_array_equal(a.rankings, b.rankings)
        np.testing.assert_array_equal(a.s_opt, b.s_opt.T)

    @settings(max_examples=60, deadline=None)
    @given(signed_matrices, st.data())
    def test_weight_bounds(self, s, data):
        k = data.draw(st.integers(2, s.shape[1]))
        res = smr_rerank(s, SmrParams(k=k))
        assert np.all((res.w_fwd >= 0) & (res.w_fwd < 1))
        assert np.all((res.w_rev >= 0) & (res.w_rev < 1))
        assert np.all((res.w_md > 0) & (res.w_md <= 2 + 1e-12))
        assert np.all(np.isfinite(res.s_opt))

    @settings(max_examples=40, deadline=None)
    @given(signed_matrices)
    def test_remap_then_rerank_is_stable(self, s):
        # a matrix with a non-positive entry is remapped once; feeding the
        # remapped matrix back in must not remap again
        s = s.copy()
        s[0, 0] = min(s[0, 0], 0.0)
        p = SmrParams(k=2)
        a = smr_rerank(s, p)
        b = smr_rerank(to_positive(s), p)
        np.testing.assert_array_equal(a.s_opt, b.s_opt)
        np.testing.assert_array_equal(a.rankings, b.rankings)

    def test_auto_leaves_positive_matrix_alone(self):
        a = smr_rerank(FIXTURE, SmrParams(k=2))
        b = smr_rerank(FIXTURE, SmrParams(k=2), positivity="never")
        np.testing.assert_array_equal(a.s_opt, b.s_opt)
        c = smr_rerank(FIXTURE, SmrParams(k=2), positivity="always")
        assert not np.array_equal(a.s_opt, c.s_opt)

    def test_uniform_matrix_keeps_index_order(self):
        s = np.full((4, 6), 0.5)
        res = smr_rerank(s, SmrParams(k=6))
        np.testing.assert_array_equal(res.rankings, np.tile(np.arange(6), (4, 1)))

    def test_outside_topk_untouched(self, rng):
        s = rng.uniform(0.1, 1, (5, 8))
        res = smr_rerank(s, SmrParams(k=3))
        mask = np.zeros_like(s, dtype=bool)
        mask[np.arange(5)[:, None], res.topk] = True
        np.testing.assert_array_equal(res.s_opt[~mask], s[~mask])


class TestErrors:
    def test_k1_without_gammas(self):
        with pytest.raises(ParameterError):
            smr_rerank(FIXTURE, SmrParams(k=1, gamma1=0, gamma2=0))

    def test_k1_with_gammas_allowed(self):
        res = smr_rerank(FIXTURE, SmrParams(k=1))
        np.testing.assert_array_equal(res.w_fwd, [[0.0], [0.0]])

    def test_k_too_large(self):
        with pytest.raises(ParameterError):
            smr_rerank(FIXTURE, SmrParams(k=3))

    def test_bad_values(self):
        with pytest.raises(ParameterError):
            smr_rerank(FIXTURE, SmrParams(direction="both"))
        with pytest.raises(ParameterError):
            smr_rerank(FIXTURE, SmrParams(k=2, gamma1=-1))
        with pytest.raises(ParameterError):
            smr_rerank(FIXTURE, SmrParams(k=2), positivity="sometimes")
        with pytest.raises(DimensionError):
            smr_rerank(np.zeros(3), SmrParams(k=2))
        with pytest.raises(NumericError):
            smr_rerank(np.array([[np.nan, 1.0], [1.0, 1.0]]), SmrParams(k=2))
        with pytest.raises(NumericError):
            smr_rerank(np.array([[0.5, 0.5], [0.0, 0.0]]), SmrParams(k=2), positivity="never")
