"""Similarity-matrix reweighting rerank.

For each query the top-K candidates get a weight built from three parts: how
high the candidate sits in the forward list, how high the query sits when the
candidate retrieves in the reverse direction, and how close the similarity is
to the best score in its row and column. The weight multiplies the similarity
and the top-K block is re-sorted by the product; candidates outside the top K
keep their original order below the block.

Matrices are always images x texts. ``"i2t"`` queries with images (rows),
``"t2i"`` queries with texts (columns). Ties go to the smaller index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, NumericError, ParameterError

DIRECTIONS = ("i2t", "t2i")


@dataclass(frozen=True)
class SmrParams:
    k: int = 10
    gamma1: float = 0.9
    gamma2: float = 1.9
    direction: str = "i2t"

    def validate(self, n_candidates: int | None = None) -> None:
        if self.direction not in DIRECTIONS:
            raise ParameterError(f"direction must be one of {DIRECTIONS}, got {self.direction!r}")
        if self.k < 1:
            raise ParameterError(f"K must be >= 1, got {self.k}")
        if self.gamma1 < 0 or self.gamma2 < 0:
            raise ParameterError(f"gamma1/gamma2 must be non-negative, got {self.gamma1}, {self.gamma2}")
        if self.k == 1 and self.gamma1 == 0 and self.gamma2 == 0:
            raise ParameterError("K=1 with gamma1=gamma2=0 zeroes every score; use K >= 2")
        if n_candidates is not None and self.k > n_candidates:
            raise ParameterError(f"K={self.k} exceeds the {n_candidates} available candidates")


@dataclass(frozen=True)
class SmrResult:
    s_opt: np.ndarray  # images x texts; top-K entries reweighted, others as given
    rankings: np.ndarray  # queries x candidates, final order
    topk: np.ndarray  # queries x K, candidates in forward order
    w_fwd: np.ndarray  # queries x K
    w_rev: np.ndarray
    w_md: np.ndarray


def weight_map(result: SmrResult, params: SmrParams) -> np.ndarray:
    return result.w_fwd + params.gamma1 * result.w_rev + params.gamma2 * result.w_md


def as_similarity(s) -> np.ndarray:
    s = np.asarray(s, dtype=np.float64)
    if s.ndim != 2 or 0 in s.shape:
        raise DimensionError(f"similarity matrix must be a non-empty 2-d array, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise NumericError("similarity matrix contains non-finite values")
    return s


def to_positive(s) -> np.ndarray:
    """Map cosine similarities from [-1, 1] onto [0, 1] with ``(s + 1) / 2``."""
    return (as_similarity(s) + 1.0) / 2.0


def _oriented(s, direction: str) -> np.ndarray:
    if direction not in DIRECTIONS:
        raise ParameterError(f"direction must be one of {DIRECTIONS}, got {direction!r}")
    return s if direction == "i2t" else s.T


def rank_topk(s, query: int, k: int, direction: str = "i2t") -> list[tuple[int, int]]:
    """Top ``k`` candidates for ``query`` as ``(candidate, rank)`` with 1-based ranks."""
    row = _oriented(as_similarity(s), direction)[query]
    if not 1 <= k <= row.size:
        raise ParameterError(f"k={k} outside 1..{row.size}")
    order = np.argsort(-row, kind="stable")[:k]
    return [(int(c), r) for r, c in enumerate(order, start=1)]


def forward_weight(j: int, k: int) -> float:
    if not 1 <= j <= k:
        raise ParameterError(f"rank {j} outside 1..{k}")
    return 1.0 - j / k


def reverse_weight(s, candidate: int, query: int, direction: str = "i2t") -> float:
    """``1 - r/N`` where ``r`` is the query's rank when ``candidate`` retrieves all N queries."""
    rev = _oriented(as_similarity(s), direction)[:, candidate]
    order = np.argsort(-rev, kind="stable")
    r = int(np.nonzero(order == query)[0][0]) + 1
    return 1.0 - r / rev.size


def extreme_diff_ratio(s, image: int, text: int) -> float:
    s = as_similarity(s)
    row_max = s[image].max()
    col_max = s[:, text].max()
    if row_max <= 0 or col_max <= 0:
        raise NumericError(f"non-positive row/column maximum at ({image}, {text})")
    v = s[image, text]
    return float(v / row_max + v / col_max)


def _prepare(s_raw, positivity: str) -> np.ndarray:
    s = as_similarity(s_raw)
    if positivity == "always" or (positivity == "auto" and s.min() <= 0):
        s = to_positive(s)
    elif positivity not in ("auto", "never"):
        raise ParameterError(f"positivity must be 'auto', 'always' or 'never', got {positivity!r}")
    if s.max(axis=1).min() <= 0 or s.max(axis=0).min() <= 0:
        raise NumericError("a row or column has no positive similarity; extreme ratio undefined")
    return s


def _rerank_rows(s: np.ndarray, k: int, g1: float, g2: float):
    nq, nc = s.shape
    order = np.argsort(-s, axis=1, kind="stable")
    top = order[:, :k]
    w_fwd = np.broadcast_to(1.0 - np.arange(1, k + 1) / k, (nq, k)).copy()

    # rev_rank[q, c]: 1-based rank of query q in candidate c's reverse list
    col_order = np.argsort(-s, axis=0, kind="stable")
    rev_rank = np.empty((nq, nc), dtype=np.int64)
    rev_rank[col_order, np.arange(nc)[None, :]] = np.arange(1, nq + 1)[:, None]
    q_idx = np.arange(nq)[:, None]
    w_rev = 1.0 - rev_rank[q_idx, top] / nq

    vals = s[q_idx, top]
    w_md = vals / s.max(axis=1)[:, None] + vals / s.max(axis=0)[top]

    s_top = (w_fwd + g1 * w_rev + g2 * w_md) * vals
    inner = np.lexsort((top, -s_top), axis=-1)
    s_opt = s.copy()
    s_opt[q_idx, top] = s_top
    rankings = np.concatenate([np.take_along_axis(top, inner, axis=1), order[:, k:]], axis=1)
    return s_opt, rankings, top, w_fwd, w_rev, w_md


def smr_rerank(s_raw, params: SmrParams, positivity: str = "auto") -> SmrResult:
    """Rerank every query's top-K list.

    ``positivity`` controls the ``(s + 1) / 2`` remap applied before weighting:
    ``"auto"`` remaps only when some similarity is <= 0, ``"always"`` and
    ``"never"`` force the choice. Remapping is monotone, so the forward and
    reverse ranks are unaffected; only the extreme-ratio term sees it.
    """
    s = _prepare(s_raw, positivity)
    oriented = _oriented(s, params.direction)
    params.validate(oriented.shape[1])
    s_opt, rankings, top, w_fwd, w_rev, w_md = _rerank_rows(oriented, params.k, params.gamma1, params.gamma2)
    if params.direction == "t2i":
        s_opt = s_opt.T
    return SmrResult(s_opt, rankings, top, w_fwd, w_rev, w_md)


def raw_rankings(s, direction: str = "i2t") -> np.ndarray:
    """Candidates per query sorted by similarity, ties to the smaller index."""
    return np.argsort(-_oriented(as_similarity(s), direction), axis=1, kind="stable")
