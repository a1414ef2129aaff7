"""Toy text encoder, masked-token sampling and the text/image fusion encoder.

The text stack and the fusion stack split one transformer of ``total_layers``
layers in half. Both use pre-norm residual sublayers and honour a padding mask.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ConfigError, DimensionError, ParameterError
from .layers import AttentionWeights, MlpWeights, cross_attention_sublayer, mlp_sublayer, self_attention_sublayer
from .tensor import DEFAULT_SEED, Initializer, as_tensor, l2_normalize, layer_norm

CLS, SEP, MASK, PAD, UNK = 0, 1, 2, 3, 4
RESERVED = ("[CLS]", "[SEP]", "[MASK]", "[PAD]", "[UNK]")


class Vocabulary:
    """Token <-> id map; ids 0..4 are reserved, file tokens start at 5."""

    def __init__(self, tokens):
        tokens = list(tokens)
        if not tokens:
            raise ConfigError("vocabulary is empty")
        self.itos = list(RESERVED) + tokens
        self.stoi = {}
        for i, tok in enumerate(self.itos):
            if tok in self.stoi:
                raise ConfigError(f"duplicate vocabulary token {tok!r}")
            self.stoi[tok] = i

    def __len__(self) -> int:
        return len(self.itos)

    @classmethod
    def load(cls, path) -> "Vocabulary":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(line.strip() for line in lines if line.strip())

    def save(self, path) -> None:
        Path(path).write_text("".join(t + "\n" for t in self.itos[len(RESERVED):]), encoding="utf-8")

    def encode(self, text: str, n_t: int) -> list[int]:
        """``[CLS] tokens [SEP]`` padded or truncated to ``n_t`` (SEP is always kept)."""
        if n_t < 2:
            raise ParameterError(f"sequence length must be >= 2, got {n_t}")
        ids = [self.stoi.get(tok, UNK) for tok in text.lower().split()]
        ids = [CLS] + ids[: n_t - 2] + [SEP]
        return ids + [PAD] * (n_t - len(ids))


@dataclass(frozen=True)
class MaskedText:
    ids: list[int]
    mask_flags: list[int]
    labels: dict[int, int]  # position -> original id


@dataclass(frozen=True)
class TransformerLayerWeights:
    self_attn: AttentionWeights
    mlp: MlpWeights
    cross_attn: AttentionWeights | None = None


@dataclass(frozen=True)
class TextEncoderWeights:
    token_emb: np.ndarray  # |V| x C_t
    pos_emb: np.ndarray  # N_T x C_t
    layers: tuple[TransformerLayerWeights, ...]
    proj: np.ndarray
    proj_bias: np.ndarray


@dataclass(frozen=True)
class FusionWeights:
    img_proj: np.ndarray  # C_img x C_m
    img_proj_bias: np.ndarray
    layers: tuple[TransformerLayerWeights, ...]
    final_gain: np.ndarray
    final_bias: np.ndarray
    itm_w: np.ndarray  # C_m
    itm_b: float
    mlm_w: np.ndarray  # C_m x |V|
    mlm_b: np.ndarray


def init_text_encoder(vocab_size: int, n_t: int = 32, width: int = 64, heads: int = 4,
                      layers: int = 6, proj_dim: int = 256, mlp_ratio: float = 4.0,
                      seed: int = DEFAULT_SEED) -> TextEncoderWeights:
    init = Initializer(seed)
    token_emb = init.uniform((vocab_size, width), 1)
    pos_emb = 0.1 * init.uniform((n_t, width), 1)
    stack = tuple(
        TransformerLayerWeights(AttentionWeights.init(width, heads, init), MlpWeights.init(width, mlp_ratio, init))
        for _ in range(layers)
    )
    proj, proj_bias = init.linear(width, proj_dim)
    return TextEncoderWeights(token_emb, pos_emb, stack, proj, proj_bias)


def init_fusion(vocab_size: int, img_channels: int, width: int = 64, heads: int = 4,
                layers: int = 6, mlp_ratio: float = 4.0, seed: int = DEFAULT_SEED + 1) -> FusionWeights:
    init = Initializer(seed)
    img_proj, img_proj_bias = init.linear(img_channels, width)
    stack = tuple(
        TransformerLayerWeights(
            AttentionWeights.init(width, heads, init),
            MlpWeights.init(width, mlp_ratio, init),
            AttentionWeights.init(width, heads, init, cross=True),
        )
        for _ in range(layers)
    )
    itm_w, itm_b = init.linear(width, 1)
    mlm_w, mlm_b = init.linear(width, vocab_size)
    return FusionWeights(img_proj, img_proj_bias, stack, np.ones(width), np.zeros(width),
                         itm_w[:, 0], float(itm_b[0]), mlm_w, mlm_b)


def pad_mask(ids) -> np.ndarray:
    """True where the position holds a real token."""
    return np.asarray(ids) != PAD


def tokenize_embed(text: str, vocab: Vocabulary, emb, n_t: int, pos_emb=None) -> np.ndarray:
    emb = as_tensor(emb)
    if len(vocab) == 0 or emb.shape[0] != len(vocab):
        raise ConfigError(f"embedding table has {emb.shape[0]} rows for a vocabulary of {len(vocab)}")
    v = emb[vocab.encode(text, n_t)]
    if pos_emb is not None:
        v = v + as_tensor(pos_emb)[:n_t]
    return v


def _check_mask(mask, n: int):
    if mask is None:
        return np.ones((1, n), dtype=bool)
    mask = np.asarray(mask, dtype=bool).reshape(1, -1)
    if mask.shape[1] != n:
        raise DimensionError(f"padding mask has length {mask.shape[1]}, sequence has {n}")
    return mask


def text_encode(v, weights: TextEncoderWeights, mask=None):
    """Run the text stack on ``N_T x C_t`` embeddings.

    Returns the token matrix and the unit-norm feature projected from the CLS
    token. ``mask`` marks real (non-PAD) positions.
    """
    v = as_tensor(v)
    if v.ndim != 2 or v.shape[1] != weights.token_emb.shape[1]:
        raise DimensionError(f"text_encode: expected N_T x {weights.token_emb.shape[1]}, got {v.shape}")
    key_mask = _check_mask(mask, v.shape[0])
    x = v[None]
    for layer in weights.layers:
        x = self_attention_sublayer(x, layer.self_attn, key_mask=key_mask)
        x = mlp_sublayer(x, layer.mlp)
    tokens = x[0]
    return tokens, l2_normalize(tokens[0] @ weights.proj + weights.proj_bias)


def project_image_tokens(img_tokens, weights: FusionWeights) -> np.ndarray:
    """Flatten an ``h x w x C`` token map and map it to the fusion width."""
    t = as_tensor(img_tokens)
    t = t.reshape(-1, t.shape[-1])
    return t @ weights.img_proj + weights.img_proj_bias


def mm_encode(img_tokens, txt_tokens, weights: FusionWeights, mask=None):
    """Fuse text tokens with image tokens (already at the fusion width).

    Each layer: text self-attention, text-to-image cross-attention, MLP.
    Returns the fused text tokens and the match probability read from token 0.
    """
    img = as_tensor(img_tokens)
    txt = as_tensor(txt_tokens)
    width = weights.itm_w.shape[0]
    if img.ndim != 2 or txt.ndim != 2 or img.shape[1] != width or txt.shape[1] != width:
        raise DimensionError(f"mm_encode: widths {img.shape} and {txt.shape} must both end in {width}")
    key_mask = _check_mask(mask, txt.shape[0])
    x = txt[None]
    for layer in weights.layers:
        x = self_attention_sublayer(x, layer.self_attn, key_mask=key_mask)
        x = cross_attention_sublayer(x, img, layer.cross_attn)
        x = mlp_sublayer(x, layer.mlp)
    fused = layer_norm(x[0], weights.final_gain, weights.final_bias)
    logit = float(fused[0] @ weights.itm_w + weights.itm_b)
    return fused, _sigmoid(logit)


def mlm_logits(fused, weights: FusionWeights) -> np.ndarray:
    return as_tensor(fused) @ weights.mlm_w + weights.mlm_b


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + np.exp(-z))
    e = np.exp(z)
    return e / (1.0 + e)


def mlm_mask(ids, p: float, seed: int, vocab_size: int | None = None) -> MaskedText:
    """Select non-reserved positions with probability ``p`` and corrupt them.

    Selected tokens become MASK 80% of the time, a random non-reserved id 10%
    of the time (requires ``vocab_size``; otherwise MASK), and stay unchanged
    otherwise. The original id is recorded as a label in all three cases.
    """
    if not 0 < p < 1:
        raise ParameterError(f"masking probability must be in (0, 1), got {p}")
    rng = np.random.default_rng(seed)
    ids = [int(i) for i in ids]
    n = len(ids)
    select = rng.random(n) < p
    action = rng.random(n)
    replacement = rng.integers(len(RESERVED), vocab_size, size=n) if vocab_size else None
    out = list(ids)
    flags = [0] * n
    labels = {}
    for t, tok in enumerate(ids):
        if tok < len(RESERVED) or not select[t]:
            continue
        flags[t] = 1
        labels[t] = tok
        if action[t] < 0.8:
            out[t] = MASK
        elif action[t] < 0.9:
            out[t] = MASK if replacement is None else int(replacement[t])
    return MaskedText(out, flags, labels)
