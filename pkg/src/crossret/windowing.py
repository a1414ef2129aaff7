"""Spatial bookkeeping for the windowed encoder.

All layouts are row-major: windows are numbered left to right, top to bottom,
and so are the tokens inside each window.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError
from .tensor import as_tensor


@dataclass(frozen=True)
class PatchGrid:
    tokens: np.ndarray  # h x w x C
    patch_size: int

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.tokens.shape


def patch_embed(image, patch_size: int, weights) -> PatchGrid:
    """Cut ``image`` (H x W x 3) into non-overlapping patches and project each to C dims.

    A patch is flattened in (row, column, channel) order before the projection,
    so ``weights`` has shape ``(3 * patch_size**2) x C``.
    """
    image = as_tensor(image)
    weights = as_tensor(weights)
    if image.ndim != 3:
        raise DimensionError(f"patch_embed: expected H x W x channels image, got {image.shape}")
    H, W, ch = image.shape
    if H % patch_size or W % patch_size:
        raise DimensionError(
            f"patch_embed: image {H}x{W} is not divisible by patch size {patch_size}"
        )
    if weights.shape[0] != ch * patch_size * patch_size:
        raise DimensionError(
            f"patch_embed: weights have {weights.shape[0]} rows, patches flatten to {ch * patch_size ** 2}"
        )
    h, w = H // patch_size, W // patch_size
    patches = image.reshape(h, patch_size, w, patch_size, ch).transpose(0, 2, 1, 3, 4)
    return PatchGrid(patches.reshape(h, w, -1) @ weights, patch_size)


def window_partition(t, win: int) -> np.ndarray:
    t = as_tensor(t)
    h, w, c = t.shape
    if win < 1 or h % win or w % win:
        raise DimensionError(f"window_partition: map {h}x{w} is not divisible by window {win}")
    x = t.reshape(h // win, win, w // win, win, c).transpose(0, 2, 1, 3, 4)
    return x.reshape(-1, win * win, c)


def window_reverse(wt, h: int, w: int) -> np.ndarray:
    wt = as_tensor(wt)
    nw, n, c = wt.shape
    win = int(round(np.sqrt(n)))
    if win * win != n or nw * n != h * w or h % win or w % win:
        raise DimensionError(
            f"window_reverse: {nw} windows of {n} tokens cannot tile a {h}x{w} map"
        )
    x = wt.reshape(h // win, w // win, win, win, c).transpose(0, 2, 1, 3, 4)
    return x.reshape(h, w, c)


def cyclic_shift(t, dy: int, dx: int) -> np.ndarray:
    """Toroidal roll: output[y, x] = t[(y - dy) mod h, (x - dx) mod w]."""
    return np.roll(as_tensor(t), (dy, dx), axis=(0, 1))


def patch_merge(t, weights) -> np.ndarray:
    """Concatenate each 2x2 neighbourhood to 4C channels and project to 2C.

    Concatenation order is top-left, bottom-left, top-right, bottom-right.
    """
    t = as_tensor(t)
    weights = as_tensor(weights)
    h, w, c = t.shape
    if h % 2 or w % 2:
        raise DimensionError(f"patch_merge: spatial extents must be even, got {h}x{w}")
    if weights.shape != (4 * c, 2 * c):
        raise DimensionError(f"patch_merge: expected weights {(4 * c, 2 * c)}, got {weights.shape}")
    cat = np.concatenate(
        [t[0::2, 0::2], t[1::2, 0::2], t[0::2, 1::2], t[1::2, 1::2]], axis=-1
    )
    return cat @ weights
