"""Global window generation: a stack of convolutional halving blocks that
squeezes a stage's feature map down to the size of one local window."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import Initializer, as_tensor, avg_pool2x2, conv2d, gelu


@dataclass(frozen=True)
class GwgBlockWeights:
    conv1x1_a: np.ndarray  # 1 x 1 x C x C/2
    conv3x3_a: np.ndarray  # 3 x 3 x C/2 x C/2
    conv3x3_b: np.ndarray  # 3 x 3 x C/2 x C/2
    conv1x1_b: np.ndarray  # 1 x 1 x C x C/2
    conv1x1_c: np.ndarray  # 1 x 1 x C x C

    @classmethod
    def init(cls, channels: int, init: Initializer) -> "GwgBlockWeights":
        if channels % 2:
            raise DimensionError(f"GWG needs an even channel count, got {channels}")
        half = channels // 2
        return cls(
            conv1x1_a=init.uniform((1, 1, channels, half)),
            conv3x3_a=init.uniform((3, 3, half, half)),
            conv3x3_b=init.uniform((3, 3, half, half)),
            conv1x1_b=init.uniform((1, 1, channels, half)),
            conv1x1_c=init.uniform((1, 1, channels, channels)),
        )

    @classmethod
    def zeros(cls, channels: int) -> "GwgBlockWeights":
        half = channels // 2
        return cls(
            np.zeros((1, 1, channels, half)),
            np.zeros((3, 3, half, half)),
            np.zeros((3, 3, half, half)),
            np.zeros((1, 1, channels, half)),
            np.zeros((1, 1, channels, channels)),
        )


def gwg_block(f, w: GwgBlockWeights) -> np.ndarray:
    """One halving block: conv branch and 1x1 branch, concat, 1x1, residual, 2x2 mean pool."""
    f = as_tensor(f)
    if f.ndim != 3:
        raise DimensionError(f"gwg_block: expected H x W x C map, got {f.shape}")
    h, wd, c = f.shape
    if h % 2 or wd % 2 or c % 2:
        raise DimensionError(f"gwg_block: extents and channels must be even, got {f.shape}")
    x1 = conv2d(f, w.conv1x1_a)
    x1 = conv2d(gelu(conv2d(x1, w.conv3x3_a, pad=1)), w.conv3x3_b, pad=1)
    x_hat = np.concatenate([x1, conv2d(f, w.conv1x1_b)], axis=-1)
    return avg_pool2x2(conv2d(x_hat, w.conv1x1_c) + f)


def n_gwg_layers(extent: int, win: int) -> int:
    """Number of halving blocks taking an ``extent``-sized map to ``win``."""
    if extent % win:
        raise ConfigError(f"GWG: map extent {extent} is not a multiple of window {win}")
    ratio = extent // win
    if ratio & (ratio - 1):
        raise ConfigError(f"GWG: extent/window = {extent}/{win} = {ratio} is not a power of two")
    return ratio.bit_length() - 1


def gwg_stack(f, win: int, weights) -> np.ndarray:
    f = as_tensor(f)
    h, w, _ = f.shape
    if h != w:
        raise DimensionError(f"gwg_stack: square input required, got {h}x{w}")
    n = n_gwg_layers(h, win)
    if len(weights) != n:
        raise ConfigError(f"gwg_stack: {h}x{w} to window {win} needs {n} blocks, got {len(weights)}")
    for block in weights:
        f = gwg_block(f, block)
    return f
