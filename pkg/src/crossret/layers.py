"""Pre-norm attention and MLP sublayers shared by the image, text and fusion encoders."""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DimensionError
from .tensor import Initializer, gelu, layer_norm, softmax_rows


@dataclass(frozen=True)
class AttentionWeights:
    heads: int
    wq: np.ndarray
    bq: np.ndarray
    wk: np.ndarray
    bk: np.ndarray
    wv: np.ndarray
    bv: np.ndarray
    wo: np.ndarray
    bo: np.ndarray
    norm_gain: np.ndarray
    norm_bias: np.ndarray
    # separate norm for the key/value source in cross-attention
    kv_norm_gain: np.ndarray | None = None
    kv_norm_bias: np.ndarray | None = None
    # (2*win-1)**2 x heads table, self-attention inside windows only
    rel_bias: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.wq.shape[0]

    @classmethod
    def init(cls, dim: int, heads: int, init: Initializer, *, cross: bool = False,
             rel_bias_win: int | None = None) -> "AttentionWeights":
        if heads < 1 or dim % heads:
            raise ConfigError(f"{heads} heads do not divide {dim} channels")
        wq, bq = init.linear(dim, dim)
        wk, bk = init.linear(dim, dim)
        wv, bv = init.linear(dim, dim)
        wo, bo = init.linear(dim, dim)
        rel = None
        if rel_bias_win is not None:
            rel = 0.02 * init.uniform(((2 * rel_bias_win - 1) ** 2, heads), 1)
        return cls(
            heads, wq, bq, wk, bk, wv, bv, wo, bo,
            np.ones(dim), np.zeros(dim),
            np.ones(dim) if cross else None,
            np.zeros(dim) if cross else None,
            rel,
        )

    def zero_values(self) -> "AttentionWeights":
        """Copy with value and output projections zeroed, so the sublayer adds nothing."""
        return replace(
            self,
            wv=np.zeros_like(self.wv), bv=np.zeros_like(self.bv),
            wo=np.zeros_like(self.wo), bo=np.zeros_like(self.bo),
        )


@dataclass(frozen=True)
class MlpWeights:
    norm_gain: np.ndarray
    norm_bias: np.ndarray
    w1: np.ndarray
    b1: np.ndarray
    w2: np.ndarray
    b2: np.ndarray

    @classmethod
    def init(cls, dim: int, ratio: float, init: Initializer) -> "MlpWeights":
        hidden = int(round(dim * ratio))
        w1, b1 = init.linear(dim, hidden)
        w2, b2 = init.linear(hidden, dim)
        return cls(np.ones(dim), np.zeros(dim), w1, b1, w2, b2)

    def zeroed(self) -> "MlpWeights":
        return replace(self, w2=np.zeros_like(self.w2), b2=np.zeros_like(self.b2))


def relative_position_index(win: int) -> np.ndarray:
    """win^2 x win^2 lookup into a (2*win-1)^2 bias table."""
    ys, xs = np.meshgrid(np.arange(win), np.arange(win), indexing="ij")
    coords = np.stack([ys.ravel(), xs.ravel()])  # 2 x win^2
    rel = coords[:, :, None] - coords[:, None, :] + (win - 1)
    return rel[0] * (2 * win - 1) + rel[1]


def multi_head_attention(q_in, kv_in, w: AttentionWeights, bias=None, key_mask=None):
    """Scaled dot-product attention over a batch.

    ``q_in`` is ``B x Nq x C``; ``kv_in`` is ``B x Nk x C`` or a single
    ``Nk x C`` set shared by every batch element. ``bias`` is added to the
    logits (``heads x Nq x Nk``); ``key_mask`` (``B x Nk`` bool, True = keep)
    removes keys. Returns the projected output and the ``B x heads x Nq x Nk``
    attention probabilities. Inputs are expected to be normalized already.
    """
    b, nq, c = q_in.shape
    if c != w.dim or kv_in.shape[-1] != c:
        raise DimensionError(f"attention: width {w.dim} vs inputs {q_in.shape}, {kv_in.shape}")
    hd = c // w.heads
    q = (q_in @ w.wq + w.bq).reshape(b, nq, w.heads, hd).transpose(0, 2, 1, 3)
    k = kv_in @ w.wk + w.bk
    v = kv_in @ w.wv + w.bv
    if kv_in.ndim == 2:
        nk = kv_in.shape[0]
        k = k.reshape(nk, w.heads, hd).transpose(1, 0, 2)[None]
        v = v.reshape(nk, w.heads, hd).transpose(1, 0, 2)[None]
    else:
        nk = kv_in.shape[1]
        k = k.reshape(b, nk, w.heads, hd).transpose(0, 2, 1, 3)
        v = v.reshape(b, nk, w.heads, hd).transpose(0, 2, 1, 3)
    logits = q @ k.swapaxes(-1, -2) / np.sqrt(hd)
    if bias is not None:
        logits = logits + bias
    if key_mask is not None:
        logits = np.where(key_mask[:, None, None, :], logits, -np.inf)
    probs = softmax_rows(logits)
    out = (probs @ v).transpose(0, 2, 1, 3).reshape(b, nq, c)
    return out @ w.wo + w.bo, probs


def self_attention_sublayer(x, w: AttentionWeights, bias=None, key_mask=None, eps=1e-5):
    """``x + Attn(LN(x))`` over a ``B x N x C`` batch."""
    h = layer_norm(x, w.norm_gain, w.norm_bias, eps)
    out, _ = multi_head_attention(h, h, w, bias, key_mask)
    return x + out


def cross_attention_sublayer(x, source, w: AttentionWeights, key_mask=None, eps=1e-5):
    """``x + Attn(LN(x), LN'(source))``; queries from ``x``, keys/values from ``source``."""
    h = layer_norm(x, w.norm_gain, w.norm_bias, eps)
    kv_gain = w.kv_norm_gain if w.kv_norm_gain is not None else w.norm_gain
    kv_bias = w.kv_norm_bias if w.kv_norm_bias is not None else w.norm_bias
    s = layer_norm(source, kv_gain, kv_bias, eps)
    out, _ = multi_head_attention(h, s, w, key_mask=key_mask)
    return x + out


def mlp_sublayer(x, w: MlpWeights, eps=1e-5):
    h = layer_norm(x, w.norm_gain, w.norm_bias, eps)
    return x + gelu(h @ w.w1 + w.b1) @ w.w2 + w.b2
