"""Recall@K metrics, ground-truth files and synthetic retrieval corpora."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DimensionError, ParameterError, ParseError
from .smr import as_similarity, raw_rankings

KS = (1, 5, 10)


@dataclass(frozen=True)
class GroundTruth:
    n_images: int
    n_texts: int
    pairs: tuple[tuple[int, int], ...]

    def __post_init__(self):
        seen = set()
        for i, t in self.pairs:
            if not (0 <= i < self.n_images and 0 <= t < self.n_texts):
                raise DataError(f"pair ({i}, {t}) outside {self.n_images} images x {self.n_texts} texts")
            if (i, t) in seen:
                raise DataError(f"duplicate pair ({i}, {t})")
            seen.add((i, t))
        covered = {t for _, t in self.pairs}
        if len(covered) != self.n_texts:
            missing = min(set(range(self.n_texts)) - covered)
            raise DataError(f"text {missing} has no relevant image")

    @classmethod
    def from_pairs(cls, pairs) -> "GroundTruth":
        pairs = tuple((int(i), int(t)) for i, t in pairs)
        if not pairs:
            raise DataError("ground truth has no pairs")
        return cls(max(i for i, _ in pairs) + 1, max(t for _, t in pairs) + 1, pairs)

    def relevance(self) -> np.ndarray:
        """Boolean images x texts relevance matrix."""
        rel = np.zeros((self.n_images, self.n_texts), dtype=bool)
        idx = np.array(self.pairs)
        rel[idx[:, 0], idx[:, 1]] = True
        return rel

    def texts_of(self, image: int) -> set[int]:
        return {t for i, t in self.pairs if i == image}


@dataclass(frozen=True)
class MetricsReport:
    txt_r1: float
    txt_r5: float
    txt_r10: float
    img_r1: float
    img_r5: float
    img_r10: float

    @property
    def values(self) -> tuple[float, ...]:
        return (self.txt_r1, self.txt_r5, self.txt_r10, self.img_r1, self.img_r5, self.img_r10)

    @property
    def mr(self) -> float:
        return mean_recall(self.values)

    HEADER = ("txt_R@1", "txt_R@5", "txt_R@10", "img_R@1", "img_R@5", "img_R@10", "mR")

    def row(self) -> tuple[float, ...]:
        return self.values + (self.mr,)

    def table(self) -> str:
        """Aligned two-line text table, two decimals."""
        cells = [f"{v:.2f}" for v in self.row()]
        widths = [max(len(h), len(c)) for h, c in zip(self.HEADER, cells)]
        head = "  ".join(h.rjust(w) for h, w in zip(self.HEADER, widths))
        body = "  ".join(c.rjust(w) for c, w in zip(cells, widths))
        return head + "\n" + body

    def csv(self) -> str:
        return ",".join(self.HEADER) + "\n" + ",".join(repr(float(v)) for v in self.row()) + "\n"


def _relevance_for(gt: GroundTruth, direction: str, shape) -> np.ndarray:
    if shape != (gt.n_images, gt.n_texts):
        raise DimensionError(f"matrix {shape} does not match ground truth {gt.n_images} x {gt.n_texts}")
    rel = gt.relevance()
    return rel if direction == "i2t" else rel.T


def recall_from_rankings(rankings, relevant, k: int) -> float:
    """Percentage of queries whose first ``k`` ranked candidates include a relevant one.

    ``relevant`` is a queries x candidates boolean matrix.
    """
    rankings = np.asarray(rankings)
    if not 1 <= k <= rankings.shape[1]:
        raise ParameterError(f"k={k} outside 1..{rankings.shape[1]}")
    rows = np.arange(rankings.shape[0])[:, None]
    return 100.0 * float(np.mean(relevant[rows, rankings[:, :k]].any(axis=1)))


def recall_at_k(s, gt: GroundTruth, k: int, direction: str = "i2t") -> float:
    """R@k with image queries (``"i2t"``, text retrieval) or text queries (``"t2i"``)."""
    s = as_similarity(s)
    rel = _relevance_for(gt, direction, s.shape)
    return recall_from_rankings(raw_rankings(s, direction), rel, k)


def mean_recall(r) -> float:
    r = [float(v) for v in r]
    if len(r) != 6:
        raise DataError(f"mean recall takes six values, got {len(r)}")
    if any(not (0.0 <= v <= 100.0) for v in r):
        raise DataError(f"recall values must lie in [0, 100], got {r}")
    return sum(r) / 6.0


def report_from_rankings(rank_i2t, rank_t2i, gt: GroundTruth) -> MetricsReport:
    rel = gt.relevance()
    txt = [recall_from_rankings(rank_i2t, rel, k) for k in KS]
    img = [recall_from_rankings(rank_t2i, rel.T, k) for k in KS]
    return MetricsReport(*txt, *img)


def metrics_report(s, gt: GroundTruth) -> MetricsReport:
    s = as_similarity(s)
    _relevance_for(gt, "i2t", s.shape)
    return report_from_rankings(raw_rankings(s, "i2t"), raw_rankings(s, "t2i"), gt)


def save_ground_truth(gt: GroundTruth, path) -> None:
    Path(path).write_text("".join(f"{i}\t{t}\n" for i, t in gt.pairs), encoding="utf-8")


def load_ground_truth(path) -> GroundTruth:
    """Read ``image_id<TAB>text_id`` lines (0-based, no header)."""
    pairs = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(f"{path}:{lineno}: expected 'image_id<TAB>text_id', got {line!r}")
        try:
            i, t = int(parts[0]), int(parts[1])
        except ValueError:
            raise ParseError(f"{path}:{lineno}: non-integer id in {line!r}") from None
        if i < 0 or t < 0:
            raise ParseError(f"{path}:{lineno}: negative id in {line!r}")
        pairs.append((i, t))
    gt = GroundTruth.from_pairs(pairs)
    missing = set(range(gt.n_images)) - {i for i, _ in pairs}
    if missing:
        raise DataError(f"{path}: image ids are not dense, {min(missing)} is missing")
    return gt


def gen_synthetic(n_img: int, caps_per_img: int, d: int, noise: float, seed: int,
                  hub: float = 0.0):
    """Random unit image anchors with noisy captions around them.

    With ``hub > 0`` a shared direction ``u`` is added to every image
    (weight 1) and to every caption (weight ``hub * Exp(1)``, drawn per
    caption), both renormalized. The caption weight shifts a whole column of
    the similarity matrix, so text-query rankings stay nearly clean while
    image-query rankings favour "hub" captions.

    Returns ``(F, G, gt)``; caption ``c`` belongs to image ``c // caps_per_img``.
    """
    if d < 2:
        raise ParameterError(f"embedding dim must be >= 2, got {d}")
    if n_img < 1 or caps_per_img < 1:
        raise ParameterError(f"need at least one image and caption, got {n_img}, {caps_per_img}")
    if noise < 0 or hub < 0:
        raise ParameterError(f"noise and hub must be non-negative, got {noise}, {hub}")
    rng = np.random.default_rng(seed)
    anchors = rng.standard_normal((n_img, d))
    anchors /= np.linalg.norm(anchors, axis=1, keepdims=True)
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    owner = np.repeat(np.arange(n_img), caps_per_img)
    G = anchors[owner] + noise * rng.standard_normal((owner.size, d))
    G /= np.linalg.norm(G, axis=1, keepdims=True)
    hub_weight = hub * rng.exponential(size=owner.size)
    F = anchors
    if hub > 0:
        G = G + hub_weight[:, None] * u
        G /= np.linalg.norm(G, axis=1, keepdims=True)
        F = anchors + u
        F /= np.linalg.norm(F, axis=1, keepdims=True)
    gt = GroundTruth(n_img, owner.size, tuple((int(i), c) for c, i in enumerate(owner)))
    return F, G, gt


def cosine_similarity(F, G) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    G = np.asarray(G, dtype=np.float64)
    return (F / np.linalg.norm(F, axis=1, keepdims=True)) @ (G / np.linalg.norm(G, axis=1, keepdims=True)).T
