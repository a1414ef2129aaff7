"""Alignment and fusion objectives with loss-layer gradients.

Similarities are plain dot products of the supplied feature rows, so gradients
are taken with respect to those rows directly (features are expected to be
unit-norm, but nothing here renormalizes them).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import log_softmax, logsumexp

from .errors import DataError, DimensionError, NumericError, ParameterError, StateError
from .tensor import as_tensor, l2_normalize
from .text import MaskedText

DEFAULT_TAU = 0.07
DEFAULT_ALPHA = 0.2
DEFAULT_MOMENTUM = 0.995
PRODUCTION_QUEUE_SIZE = 65536
DESK_QUEUE_SIZE = 512


class MomentumQueue:
    """Fixed-capacity FIFO of unit-norm feature vectors.

    Single writer: concurrent reads are fine, pushes must be serialized by the caller.
    """

    def __init__(self, capacity: int, dim: int):
        if capacity < 1 or dim < 1:
            raise ParameterError(f"queue capacity and dim must be positive, got {capacity}, {dim}")
        self.capacity = capacity
        self.dim = dim
        self._buf = np.zeros((capacity, dim))
        self._cursor = 0
        self._size = 0

    def __len__(self) -> int:
        return self._size

    def push(self, features) -> None:
        feats = np.atleast_2d(as_tensor(features))
        if feats.shape[1] != self.dim:
            raise DimensionError(f"queue holds {self.dim}-d vectors, got {feats.shape}")
        for row in l2_normalize(feats):
            self._buf[self._cursor] = row
            self._cursor = (self._cursor + 1) % self.capacity
            self._size = min(self._size + 1, self.capacity)

    @property
    def entries(self) -> np.ndarray:
        """Stored vectors, oldest first."""
        if self._size < self.capacity:
            return self._buf[: self._size].copy()
        return np.roll(self._buf, -self._cursor, axis=0)


@dataclass(frozen=True)
class LossBatch:
    F: np.ndarray  # N x d image features
    G: np.ndarray  # N x d text features

    def __post_init__(self):
        if self.F.shape != self.G.shape or self.F.ndim != 2:
            raise DimensionError(f"image/text feature blocks differ: {self.F.shape} vs {self.G.shape}")

    @property
    def S(self) -> np.ndarray:
        return self.F @ self.G.T


def _queue_matrix(q) -> np.ndarray:
    m = q.entries if isinstance(q, MomentumQueue) else as_tensor(q)
    if m.ndim != 2 or m.shape[0] == 0:
        raise StateError("contrastive loss needs a non-empty momentum queue")
    return m


def itc_loss(batch: LossBatch, q_img, q_txt, tau: float = DEFAULT_TAU):
    """Symmetric InfoNCE against momentum queues.

    The positive logit uses the current pair ``F_i . G_i``; the normalizer runs
    over the queued texts (for image anchors) or queued images (for text
    anchors), which should already contain the batch's own momentum features.
    Queues are treated as constants. Returns ``(loss, (dF, dG))``.
    """
    if not tau > 0:
        raise ParameterError(f"temperature must be positive, got {tau}")
    F, G = as_tensor(batch.F), as_tensor(batch.G)
    t_bank = _queue_matrix(q_txt)
    i_bank = _queue_matrix(q_img)
    n = F.shape[0]
    pos = np.sum(F * G, axis=1) / tau
    logits_i2t = F @ t_bank.T / tau
    logits_t2i = G @ i_bank.T / tau
    loss = -(np.sum(pos - logsumexp(logits_i2t, axis=1)) + np.sum(pos - logsumexp(logits_t2i, axis=1))) / (2 * n)
    p_i2t = np.exp(log_softmax(logits_i2t, axis=1))
    p_t2i = np.exp(log_softmax(logits_t2i, axis=1))
    dF = -(2 * G - p_i2t @ t_bank) / (2 * n * tau)
    dG = -(2 * F - p_t2i @ i_bank) / (2 * n * tau)
    return float(loss), (dF, dG)


def momentum_update(params, m_params, m: float = DEFAULT_MOMENTUM) -> list[np.ndarray]:
    """Return ``m * old + (1 - m) * current`` for each momentum tensor."""
    if not 0 <= m < 1:
        raise ParameterError(f"momentum must be in [0, 1), got {m}")
    if len(params) != len(m_params):
        raise DimensionError(f"{len(params)} parameters vs {len(m_params)} momentum copies")
    out = []
    for p, mp in zip(params, m_params):
        p, mp = as_tensor(p), as_tensor(mp)
        if p.shape != mp.shape:
            raise DimensionError(f"momentum copy {mp.shape} does not match parameter {p.shape}")
        out.append(m * mp + (1 - m) * p)
    return out


def triplet_opt_loss(S, alpha: float = DEFAULT_ALPHA, include_diagonal: bool = False):
    """Bidirectional hinge loss plus a pull of every matched similarity toward 1.

    ``S[i, j]`` is image ``i`` against text ``j``; the diagonal holds matched
    pairs. With ``include_diagonal`` the ``i == j`` hinge terms (each worth
    ``alpha`` and gradient-free) are added back. Hinges exactly at zero are
    treated as inactive. Returns ``(loss, dS)``.
    """
    if alpha < 0:
        raise ParameterError(f"margin must be non-negative, got {alpha}")
    S = as_tensor(S)
    if S.ndim != 2 or S.shape[0] != S.shape[1] or S.shape[0] < 1:
        raise DimensionError(f"triplet loss needs a square similarity block, got {S.shape}")
    n = S.shape[0]
    diag = np.diag(S)
    keep = np.ones((n, n), dtype=bool) if include_diagonal else ~np.eye(n, dtype=bool)
    h_img = alpha - diag[:, None] + S  # image i as anchor, text j as negative
    h_txt = alpha - diag[None, :] + S  # text j as anchor, image i as negative
    a_img = (h_img > 0) & keep
    a_txt = (h_txt > 0) & keep
    loss = np.sum(h_img[a_img]) + np.sum(h_txt[a_txt]) + np.sum(1 - diag)
    grad = a_img.astype(float) + a_txt.astype(float)
    grad[np.diag_indices(n)] -= a_img.sum(axis=1) + a_txt.sum(axis=0) + 1
    return float(loss), grad


def mlm_loss(logits, masked: MaskedText) -> float:
    """Mean negative log-likelihood of the original ids at masked positions."""
    logits = as_tensor(logits)
    if logits.ndim != 2 or logits.shape[0] != len(masked.ids):
        raise DimensionError(f"logits {logits.shape} do not cover {len(masked.ids)} positions")
    positions = [t for t, flag in enumerate(masked.mask_flags) if flag]
    if not positions:
        return 0.0
    labels = [masked.labels[t] for t in positions]
    if max(labels) >= logits.shape[1] or min(labels) < 0:
        raise DataError(f"label id outside vocabulary of size {logits.shape[1]}")
    logp = log_softmax(logits[positions], axis=1)
    return float(-np.mean(logp[np.arange(len(positions)), labels]))


def itm_loss(probs, labels, clamp: float = 1e-12) -> float:
    probs = as_tensor(probs).ravel()
    labels = as_tensor(labels).ravel()
    if probs.shape != labels.shape:
        raise DimensionError(f"{probs.size} probabilities vs {labels.size} labels")
    p = np.clip(probs, clamp, 1 - clamp)
    return float(-np.mean(labels * np.log(p) + (1 - labels) * np.log1p(-p)))


def total_loss(itc: float, triplet: float, mlm: float, itm: float) -> float:
    return itc + triplet + mlm + itm


def finite_diff_check(f, x, analytic_grad, eps: float = 1e-5) -> float:
    """Compare ``analytic_grad`` with central differences of scalar ``f`` at ``x``.

    Returns ``max|numeric - analytic| / (max|numeric| + 1e-8)``.
    """
    if not eps > 0:
        raise ParameterError(f"step must be positive, got {eps}")
    x = as_tensor(x)
    g = as_tensor(analytic_grad)
    if g.shape != x.shape:
        raise DimensionError(f"gradient {g.shape} does not match parameter {x.shape}")
    num = np.empty_like(x)
    flat = x.ravel()
    for idx in range(flat.size):
        xp = flat.copy()
        xm = flat.copy()
        xp[idx] += eps
        xm[idx] -= eps
        fp = f(xp.reshape(x.shape))
        fm = f(xm.reshape(x.shape))
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NumericError(f"non-finite objective at coordinate {idx}")
        num.flat[idx] = (fp - fm) / (2 * eps)
    return float(np.max(np.abs(num - g)) / (np.max(np.abs(num)) + 1e-8))
