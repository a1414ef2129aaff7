"""Dense float64 primitives on numpy arrays.

Everything here is a pure function: inputs are never modified and the result
is a fresh array. Layout is channels-last (``H x W x C``) for feature maps.
"""
from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.special import erf

from .errors import DimensionError, ParameterError

DEFAULT_SEED = 0


def as_tensor(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


def matmul(a, b) -> np.ndarray:
    a = as_tensor(a)
    b = as_tensor(b)
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    return a @ b


def softmax_rows(x, temperature: float = 1.0, axis: int = -1) -> np.ndarray:
    """Softmax along ``axis`` after dividing by ``temperature``.

    Row maxima are subtracted first, so any finite input is safe. ``-inf``
    entries (used as attention masks) get probability zero.
    """
    if not temperature > 0:
        raise ParameterError(f"temperature must be positive, got {temperature}")
    z = as_tensor(x) / temperature
    z = z - np.max(z, axis=axis, keepdims=True)
    e = np.exp(z)
    return e / np.sum(e, axis=axis, keepdims=True)


def conv2d(x, kernel, stride: int = 1, pad: int = 0) -> np.ndarray:
    """2-D cross-correlation of an ``H x W x Cin`` map with a ``kh x kw x Cin x Cout`` kernel.

    Zero padding of ``pad`` pixels on every side.
    """
    x = as_tensor(x)
    kernel = as_tensor(kernel)
    if x.ndim != 3 or kernel.ndim != 4:
        raise DimensionError(f"conv2d: expected HxWxC input and 4-d kernel, got {x.shape} and {kernel.shape}")
    if stride < 1 or pad < 0:
        raise ParameterError(f"conv2d: stride must be >= 1 and pad >= 0, got {stride}, {pad}")
    h, w, cin = x.shape
    kh, kw, kcin, cout = kernel.shape
    if kcin != cin:
        raise DimensionError(f"conv2d: input has {cin} channels, kernel expects {kcin}")
    if h + 2 * pad < kh or w + 2 * pad < kw:
        raise DimensionError(f"conv2d: kernel {kh}x{kw} larger than padded input {h + 2 * pad}x{w + 2 * pad}")
    if kh == 1 and kw == 1 and pad == 0:
        return x[::stride, ::stride] @ kernel[0, 0]
    if pad:
        x = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    # windows: H' x W' x Cin x kh x kw
    win = sliding_window_view(x, (kh, kw), axis=(0, 1))[::stride, ::stride]
    return np.einsum("yxcij,ijco->yxo", win, kernel, optimize=True)


def layer_norm(x, gain, bias, eps: float = 1e-5) -> np.ndarray:
    x = as_tensor(x)
    gain = as_tensor(gain)
    bias = as_tensor(bias)
    c = x.shape[-1]
    if gain.shape != (c,) or bias.shape != (c,):
        raise DimensionError(f"layer_norm: last axis is {c}, gain {gain.shape}, bias {bias.shape}")
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


def gelu(x) -> np.ndarray:
    """Exact GELU, ``x * Phi(x)`` with the erf-based normal CDF."""
    x = as_tensor(x)
    return 0.5 * x * (1.0 + erf(x / math.sqrt(2.0)))


def avg_pool2x2(x) -> np.ndarray:
    x = as_tensor(x)
    h, w = x.shape[:2]
    if h % 2 or w % 2:
        raise DimensionError(f"avg_pool2x2: spatial extents must be even, got {h}x{w}")
    return x.reshape(h // 2, 2, w // 2, 2, *x.shape[2:]).mean(axis=(1, 3))


def l2_normalize(x, axis: int = -1) -> np.ndarray:
    x = as_tensor(x)
    norm = np.linalg.norm(x, axis=axis, keepdims=True)
    if np.any(norm == 0):
        raise DimensionError("l2_normalize: zero vector has no direction")
    return x / norm


class Initializer:
    """Seeded fan-in scaled uniform initializer.

    Each call draws from ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``; the stream is
    fully determined by the seed and the order of calls.
    """

    def __init__(self, seed: int = DEFAULT_SEED):
        self.rng = np.random.default_rng(seed)

    def uniform(self, shape, fan_in: int | None = None) -> np.ndarray:
        shape = tuple(shape)
        if fan_in is None:
            fan_in = int(np.prod(shape[:-1])) if len(shape) > 1 else shape[0]
        bound = 1.0 / math.sqrt(fan_in)
        return self.rng.uniform(-bound, bound, size=shape)

    def linear(self, n_in: int, n_out: int) -> tuple[np.ndarray, np.ndarray]:
        return self.uniform((n_in, n_out), n_in), self.uniform((n_out,), n_in)
