import dataclasses

import numpy as np
import pytest

from crossret.errors import ConfigError, DimensionError
from crossret.gswin import (
    EncodeTrace,
    GswinConfig,
    global_local_attention,
    glw_ca,
    gswin_block,
    image_encode,
    init_block,
    init_image_encoder,
    lw_msa,
    slw_msa,
    window_attention,
)
from crossret.layers import AttentionWeights
from crossret.layers import mlp_sublayer
from crossret.tensor import Initializer


def attn(dim=8, heads=2, seed=0, **kw):
    return AttentionWeights.init(dim, heads, Initializer(seed), **kw)


class TestLocalWindowAttention:
    def test_unit_windows_zero_values_is_identity(self, rng):
        f = rng.standard_normal((4, 4, 8))
        np.testing.assert_array_equal(lw_msa(f, attn().zero_values(), 1), f)

    def test_shape_and_probabilities(self, rng):
        f = rng.standard_normal((16, 16, 8))
        out, probs = window_attention(f, attn(), 8)
        assert out.shape == f.shape
        assert probs.shape == (4, 2, 64, 64)
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-9)

    def test_permutation_equivariance(self, rng):
        w = attn(seed=3)
        f = rng.standard_normal((4, 4, 8))
        perm = rng.permutation(16)
        out = lw_msa(f, w, 4).reshape(16, 8)
        out_perm = lw_msa(f.reshape(16, 8)[perm].reshape(4, 4, 8), w, 4).reshape(16, 8)
        np.testing.assert_allclose(out_perm, out[perm], atol=1e-9)

    def test_relative_bias_changes_output(self, rng):
        f = rng.standard_normal((4, 4, 8))
        plain = attn(seed=2)
        biased = attn(seed=2, rel_bias_win=4)
        assert biased.rel_bias.shape == (49, 2)
        assert not np.allclose(lw_msa(f, plain, 4), lw_msa(f, biased, 4))

    def test_heads_must_divide(self):
        with pytest.raises(ConfigError):
            AttentionWeights.init(8, 3, Initializer(0))


class TestShiftedWindowAttention:
    def test_zero_shift_equals_local(self, rng):
        f = rng.standard_normal((8, 8, 8))
        w = attn()
        np.testing.assert_array_equal(slw_msa(f, w, 4, 0), lw_msa(f, w, 4))

    def test_full_window_shift_equals_local(self, rng):
        f = rng.standard_normal((8, 8, 8))
        w = attn(rel_bias_win=4)
        np.testing.assert_array_equal(slw_msa(f, w, 4, 4), lw_msa(f, w, 4))

    def test_half_shift_differs_and_keeps_shape(self, rng):
        f = rng.standard_normal((8, 8, 8))
        w = attn()
        out = slw_msa(f, w, 4, 2)
        assert out.shape == f.shape
        assert not np.allclose(out, lw_msa(f, w, 4))


class TestGlobalLocalCrossAttention:
    def test_zero_output_projection_is_identity(self, rng):
        f = rng.standard_normal((8, 8, 8))
        f_w = np.full((4, 4, 8), 0.3)
        w = dataclasses.replace(attn(cross=True), wo=np.zeros((8, 8)), bo=np.zeros(8))
        np.testing.assert_array_equal(glw_ca(f, f_w, w), f)

    def test_identical_windows_identical_outputs(self, rng):
        block = rng.standard_normal((4, 4, 8))
        f = np.tile(block, (2, 2, 1))
        out = glw_ca(f, rng.standard_normal((4, 4, 8)), attn(cross=True))
        np.testing.assert_array_equal(out[:4, :4], out[4:, 4:])
        np.testing.assert_array_equal(out[:4, :4], out[:4, 4:])

    def test_shape_and_probabilities(self, rng):
        out, probs = global_local_attention(
            rng.standard_normal((16, 16, 8)), rng.standard_normal((8, 8, 8)), attn(cross=True))
        assert out.shape == (16, 16, 8)
        assert probs.shape == (4, 2, 64, 64)
        np.testing.assert_allclose(probs.sum(axis=-1), 1.0, atol=1e-9)

    def test_extent_mismatch(self, rng):
        with pytest.raises(DimensionError):
            glw_ca(rng.standard_normal((12, 12, 8)), rng.standard_normal((8, 8, 8)), attn(cross=True))
        with pytest.raises(DimensionError):
            glw_ca(rng.standard_normal((16, 16, 8)), rng.standard_normal((8, 4, 8)), attn(cross=True))


class TestBlock:
    cfg = GswinConfig(win=8)

    def test_shape_preserved(self, rng):
        w = init_block(self.cfg, 32, 2, 64, Initializer(0))
        f = rng.standard_normal((64, 64, 32))
        assert gswin_block(f, self.cfg, w).shape == (64, 64, 32)

    def test_zeroed_attention_leaves_branch_sum_and_mlp(self, rng):
        w = init_block(self.cfg, 16, 2, 16, Initializer(1))
        w = dataclasses.replace(
            w, lw=w.lw.zero_values(), slw=w.slw.zero_values(),
            glw1=w.glw1.zero_values(), glw2=w.glw2.zero_values(),
        )
        f = rng.standard_normal((16, 16, 16))
        # both branches reduce to their residual input f, and the branches are summed
        np.testing.assert_array_equal(gswin_block(f, self.cfg, w), mlp_sublayer(2 * f, w.mlp))
        w = dataclasses.replace(w, mlp=w.mlp.zeroed())
        np.testing.assert_array_equal(gswin_block(f, self.cfg, w), 2 * f)

    def test_deterministic(self, rng):
        f = rng.standard_normal((16, 16, 16))
        a = gswin_block(f, self.cfg, init_block(self.cfg, 16, 2, 16, Initializer(5)))
        b = gswin_block(f, self.cfg, init_block(self.cfg, 16, 2, 16, Initializer(5)))
        np.testing.assert_array_equal(a, b)

    def test_shared_glw_weights(self):
        cfg = GswinConfig(share_glw=True, gwg_shared=True)
        w = init_block(cfg, 16, 2, 32, Initializer(0))
        assert w.glw1 is w.glw2
        assert len(w.gwg) == 2 and w.gwg[0] is w.gwg[1]


class TestImageEncoder:
    def test_structural_ledger(self, rng):
        cfg = GswinConfig()
        trace = EncodeTrace()
        tokens, feature = image_encode(rng.uniform(size=(256, 256, 3)), cfg, init_image_encoder(cfg), trace)
        assert tokens.shape == (8, 8, 256)
        assert feature.shape == (256,)
        assert abs(np.linalg.norm(feature) - 1) < 1e-12
        assert [s.extent for s in trace.stages] == [(64, 64), (32, 32), (16, 16), (8, 8)]
        assert [s.channels for s in trace.stages] == [32, 64, 128, 256]
        assert trace.blocks_run == 6

    def test_small_config(self, rng):
        cfg = GswinConfig(win=2, base_channels=8, image_size=64, proj_dim=16)
        tokens, feature = image_encode(rng.uniform(size=(64, 64, 3)), cfg, init_image_encoder(cfg))
        assert tokens.shape == (2, 2, 64)
        assert feature.shape == (16,)

    def test_feature_is_projected_token_zero(self, rng):
        cfg = GswinConfig(win=2, base_channels=8, image_size=64, proj_dim=16)
        w = init_image_encoder(cfg)
        tokens, feature = image_encode(rng.uniform(size=(64, 64, 3)), cfg, w)
        raw = tokens[0, 0] @ w.proj + w.proj_bias
        np.testing.assert_allclose(feature, raw / np.linalg.norm(raw), atol=1e-15)
        mean_cfg = dataclasses.replace(cfg, feature_pool="mean")
        _, f_mean = image_encode(rng.uniform(size=(64, 64, 3)), mean_cfg, w)
        assert abs(np.linalg.norm(f_mean) - 1) < 1e-12

    def test_bad_image_size(self):
        cfg = GswinConfig()
        with pytest.raises(DimensionError, match="100x100"):
            image_encode(np.zeros((100, 100, 3)), cfg, init_image_encoder(cfg))

    def test_config_validation(self):
        with pytest.raises(ConfigError):
            GswinConfig(win=7).validate()
        with pytest.raises(ConfigError):
            GswinConfig(stage_depths=(1, 1, 3)).validate()

    def test_forward_is_deterministic(self):
        cfg = GswinConfig(win=4, base_channels=8, image_size=128, proj_dim=16, rel_pos_bias=True)
        img = np.random.default_rng(9).uniform(size=(128, 128, 3))
        a = image_encode(img, cfg, init_image_encoder(cfg, 3))
        b = image_encode(img, cfg, init_image_encoder(cfg, 3))
        np.testing.assert_array_equal(a[0], b[0])
        np.testing.assert_array_equal(a[1], b[1])
