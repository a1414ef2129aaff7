"""Global/local window attention encoder for images.

A block runs window self-attention, shifted-window self-attention on its
result, then lets both branches cross-attend one global window produced by
:mod:`crossret.gwg`, and sums the two branches. Four stages of such blocks,
separated by patch merging, turn an ``H x W x 3`` image into an
``H/32 x W/32 x 8C`` token map.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DimensionError
from .gwg import GwgBlockWeights, gwg_stack, n_gwg_layers
from .layers import (
    AttentionWeights,
    MlpWeights,
    mlp_sublayer,
    multi_head_attention,
    relative_position_index,
)
from .tensor import DEFAULT_SEED, Initializer, as_tensor, l2_normalize, layer_norm
from .windowing import cyclic_shift, patch_embed, patch_merge, window_partition, window_reverse


@dataclass(frozen=True)
class GswinConfig:
    patch_size: int = 4
    win: int = 8
    base_channels: int = 32
    stage_depths: tuple[int, ...] = (1, 1, 3, 1)
    heads_per_stage: tuple[int, ...] | None = None
    proj_dim: int = 256
    mlp_ratio: float = 4.0
    rel_pos_bias: bool = False
    shift: int | None = None
    image_size: int = 256
    gwg_shared: bool = False
    share_glw: bool = False
    feature_pool: str = "token0"  # or "mean"

    @property
    def shift_size(self) -> int:
        return self.win // 2 if self.shift is None else self.shift

    def stage_channels(self, k: int) -> int:
        return self.base_channels * 2 ** k

    def stage_heads(self, k: int) -> int:
        if self.heads_per_stage is not None:
            return self.heads_per_stage[k]
        return max(1, self.stage_channels(k) // 16)

    def stage_extent(self, k: int, image_size: int | None = None) -> int:
        size = self.image_size if image_size is None else image_size
        return size // self.patch_size // 2 ** k

    def validate(self, image_size: int | None = None) -> None:
        size = self.image_size if image_size is None else image_size
        if len(self.stage_depths) != 4:
            raise ConfigError(f"stage_depths needs 4 entries, got {list(self.stage_depths)}")
        if self.heads_per_stage is not None and len(self.heads_per_stage) != 4:
            raise ConfigError(f"heads_per_stage needs 4 entries, got {list(self.heads_per_stage)}")
        if self.feature_pool not in ("token0", "mean"):
            raise ConfigError(f"feature_pool must be 'token0' or 'mean', got {self.feature_pool!r}")
        if self.base_channels % 2:
            raise ConfigError(f"base_channels must be even, got {self.base_channels}")
        if size % (self.patch_size * 8):
            raise ConfigError(
                f"image size {size} must be divisible by patch_size*8 = {self.patch_size * 8}"
            )
        for k in range(4):
            extent = self.stage_extent(k, size)
            if extent % self.win:
                raise ConfigError(f"stage {k + 1}: extent {extent} not divisible by window {self.win}")
            n_gwg_layers(extent, self.win)
            c = self.stage_channels(k)
            if c % self.stage_heads(k):
                raise ConfigError(f"stage {k + 1}: {self.stage_heads(k)} heads do not divide {c} channels")


@dataclass(frozen=True)
class GswinBlockWeights:
    lw: AttentionWeights
    slw: AttentionWeights
    glw1: AttentionWeights
    glw2: AttentionWeights
    gwg: tuple[GwgBlockWeights, ...]
    mlp: MlpWeights


@dataclass(frozen=True)
class ImageEncoderWeights:
    patch: np.ndarray
    stages: tuple[tuple[GswinBlockWeights, ...], ...]
    merges: tuple[np.ndarray, ...]
    proj: np.ndarray
    proj_bias: np.ndarray


@dataclass
class StageRecord:
    stage: int
    extent: tuple[int, int]
    channels: int
    blocks: int
    gwg_layers: int
    global_window: tuple[int, ...]


@dataclass
class EncodeTrace:
    stages: list[StageRecord] = field(default_factory=list)

    @property
    def blocks_run(self) -> int:
        return sum(s.blocks for s in self.stages)


def _rel_bias(w: AttentionWeights, win: int):
    if w.rel_bias is None:
        return None
    idx = relative_position_index(win)
    return w.rel_bias[idx].transpose(2, 0, 1)  # heads x N x N


def window_attention(f, w: AttentionWeights, win: int):
    """Window self-attention on an ``h x w x C`` map.

    Returns the residual output and the ``windows x heads x N x N`` attention
    probabilities.
    """
    f = as_tensor(f)
    h, wd, c = f.shape
    if c % w.heads:
        raise ConfigError(f"{w.heads} heads do not divide {c} channels")
    if h % win or wd % win:
        raise DimensionError(f"window attention: map {h}x{wd} not divisible by window {win}")
    x = layer_norm(f, w.norm_gain, w.norm_bias)
    xw = window_partition(x, win)
    out, probs = multi_head_attention(xw, xw, w, bias=_rel_bias(w, win))
    return f + window_reverse(out, h, wd), probs


def lw_msa(f, w: AttentionWeights, win: int) -> np.ndarray:
    return window_attention(f, w, win)[0]


def slw_msa(f_l, w: AttentionWeights, win: int, shift: int) -> np.ndarray:
    shifted = cyclic_shift(f_l, -shift, -shift)
    return cyclic_shift(lw_msa(shifted, w, win), shift, shift)


def global_local_attention(f_local, f_w, w: AttentionWeights):
    """Cross-attention from every local window to one shared global window.

    Returns the residual output and the ``windows x heads x N x N`` probabilities.
    """
    f_local = as_tensor(f_local)
    f_w = as_tensor(f_w)
    h, wd, c = f_local.shape
    gh, gw, gc = f_w.shape
    if gh != gw or gc != c:
        raise DimensionError(f"glw_ca: global window {f_w.shape} does not match local map {f_local.shape}")
    win = gh
    if h % win or wd % win:
        raise DimensionError(f"glw_ca: local map {h}x{wd} not divisible by global window {win}")
    x = layer_norm(f_local, w.norm_gain, w.norm_bias)
    kv_gain = w.kv_norm_gain if w.kv_norm_gain is not None else w.norm_gain
    kv_bias = w.kv_norm_bias if w.kv_norm_bias is not None else w.norm_bias
    g = layer_norm(f_w, kv_gain, kv_bias).reshape(win * win, c)
    out, probs = multi_head_attention(window_partition(x, win), g, w)
    return f_local + window_reverse(out, h, wd), probs


def glw_ca(f_local, f_w, w: AttentionWeights) -> np.ndarray:
    return global_local_attention(f_local, f_w, w)[0]


def gswin_block(f, cfg: GswinConfig, weights: GswinBlockWeights) -> np.ndarray:
    f = as_tensor(f)
    f_w = gwg_stack(f, cfg.win, weights.gwg)
    f_l = lw_msa(f, weights.lw, cfg.win)
    f_sl = slw_msa(f_l, weights.slw, cfg.win, cfg.shift_size)
    f_gl = glw_ca(f_l, f_w, weights.glw1) + glw_ca(f_sl, f_w, weights.glw2)
    return mlp_sublayer(f_gl, weights.mlp)


def init_block(cfg: GswinConfig, channels: int, heads: int, extent: int,
               init: Initializer) -> GswinBlockWeights:
    rel = cfg.win if cfg.rel_pos_bias else None
    lw = AttentionWeights.init(channels, heads, init, rel_bias_win=rel)
    slw = AttentionWeights.init(channels, heads, init, rel_bias_win=rel)
    glw1 = AttentionWeights.init(channels, heads, init, cross=True)
    glw2 = glw1 if cfg.share_glw else AttentionWeights.init(channels, heads, init, cross=True)
    n = n_gwg_layers(extent, cfg.win)
    if cfg.gwg_shared and n:
        gwg = (GwgBlockWeights.init(channels, init),) * n
    else:
        gwg = tuple(GwgBlockWeights.init(channels, init) for _ in range(n))
    mlp = MlpWeights.init(channels, cfg.mlp_ratio, init)
    return GswinBlockWeights(lw, slw, glw1, glw2, gwg, mlp)


def init_image_encoder(cfg: GswinConfig, seed: int = DEFAULT_SEED) -> ImageEncoderWeights:
    cfg.validate()
    init = Initializer(seed)
    c = cfg.base_channels
    patch = init.uniform((3 * cfg.patch_size ** 2, c))
    stages, merges = [], []
    for k in range(4):
        ck = cfg.stage_channels(k)
        extent = cfg.stage_extent(k)
        stages.append(tuple(
            init_block(cfg, ck, cfg.stage_heads(k), extent, init)
            for _ in range(cfg.stage_depths[k])
        ))
        if k < 3:
            merges.append(init.uniform((4 * ck, 2 * ck)))
    proj, proj_bias = init.linear(cfg.stage_channels(3), cfg.proj_dim)
    return ImageEncoderWeights(patch, tuple(stages), tuple(merges), proj, proj_bias)


def image_encode(image, cfg: GswinConfig, weights: ImageEncoderWeights,
                 trace: EncodeTrace | None = None):
    """Encode an ``H x W x 3`` image.

    Returns the final ``H/32 x W/32 x 8C`` token map and a unit-norm feature of
    length ``proj_dim`` taken from token 0 (or the token mean when
    ``cfg.feature_pool == "mean"``).
    """
    image = as_tensor(image)
    if image.ndim != 3 or image.shape[2] != 3:
        raise DimensionError(f"image_encode: expected H x W x 3 image, got {image.shape}")
    H, W, _ = image.shape
    if H != W:
        raise DimensionError(f"image_encode: square images only, got {H}x{W}")
    if H % (cfg.patch_size * 8):
        raise DimensionError(
            f"image_encode: image {H}x{W} not divisible by patch_size*8 = {cfg.patch_size * 8}"
        )
    x = patch_embed(image, cfg.patch_size, weights.patch).tokens
    for k, blocks in enumerate(weights.stages):
        h, w, c = x.shape
        if h % cfg.win or (blocks and len(blocks[0].gwg) != n_gwg_layers(h, cfg.win)):
            raise DimensionError(
                f"stage {k + 1}: {h}x{w} map does not fit window {cfg.win} with the given weights"
            )
        f_w_shape: tuple[int, ...] = ()
        for block in blocks:
            if trace is not None and not f_w_shape:
                f_w_shape = gwg_stack(x, cfg.win, block.gwg).shape
            x = gswin_block(x, cfg, block)
        if trace is not None:
            trace.stages.append(StageRecord(
                k + 1, (h, w), c, len(blocks), n_gwg_layers(h, cfg.win), f_w_shape
            ))
        if k < 3:
            x = patch_merge(x, weights.merges[k])
    pooled = x.reshape(-1, x.shape[-1])[0] if cfg.feature_pool == "token0" else x.mean(axis=(0, 1))
    feature = l2_normalize(pooled @ weights.proj + weights.proj_bias)
    return x, feature
