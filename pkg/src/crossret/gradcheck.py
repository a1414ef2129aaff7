"""Seeded finite-difference suite for the loss-layer gradients."""
from __future__ import annotations

import numpy as np

from .losses import DEFAULT_ALPHA, DEFAULT_TAU, LossBatch, finite_diff_check, itc_loss, triplet_opt_loss


def _unit_rows(rng, n, d):
    x = rng.standard_normal((n, d))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def random_triplet_block(rng, n: int, alpha: float, margin: float = 1e-3) -> np.ndarray:
    """Random similarity block whose hinge arguments all sit at least ``margin`` from zero."""
    while True:
        S = rng.uniform(-1.0, 1.0, size=(n, n))
        d = np.diag(S)
        off = ~np.eye(n, dtype=bool)
        h = np.concatenate([(alpha - d[:, None] + S)[off], (alpha - d[None, :] + S)[off]])
        if np.all(np.abs(h) > margin):
            return S


def random_itc_case(rng, n: int, m: int, d: int):
    """Batch plus queues that hold the batch's (slightly perturbed) momentum positives."""
    F = _unit_rows(rng, n, d)
    G = _unit_rows(rng, n, d)
    jitter = 0.05
    q_img = np.vstack([F + jitter * rng.standard_normal(F.shape), _unit_rows(rng, m - n, d)])
    q_txt = np.vstack([G + jitter * rng.standard_normal(G.shape), _unit_rows(rng, m - n, d)])
    q_img /= np.linalg.norm(q_img, axis=1, keepdims=True)
    q_txt /= np.linalg.norm(q_txt, axis=1, keepdims=True)
    return F, G, q_img, q_txt


def run_suite(trials: int = 100, seed: int = 0, eps: float = 1e-5,
              tau: float = DEFAULT_TAU, alpha: float = DEFAULT_ALPHA) -> dict[str, float]:
    """Max relative error per check over ``trials`` seeded batches."""
    rng = np.random.default_rng(seed)
    worst = {"triplet_dS": 0.0, "itc_dF": 0.0, "itc_dG": 0.0}
    for _ in range(trials):
        n = int(rng.integers(2, 7))
        S = random_triplet_block(rng, n, alpha)
        _, dS = triplet_opt_loss(S, alpha)
        err = finite_diff_check(lambda x: triplet_opt_loss(x, alpha)[0], S, dS, eps)
        worst["triplet_dS"] = max(worst["triplet_dS"], err)

        n = int(rng.integers(2, 5))
        m = n + int(rng.integers(2, 6))
        F, G, q_img, q_txt = random_itc_case(rng, n, m, 8)
        _, (dF, dG) = itc_loss(LossBatch(F, G), q_img, q_txt, tau)
        err = finite_diff_check(lambda x: itc_loss(LossBatch(x, G), q_img, q_txt, tau)[0], F, dF, eps)
        worst["itc_dF"] = max(worst["itc_dF"], err)
        err = finite_diff_check(lambda x: itc_loss(LossBatch(F, x), q_img, q_txt, tau)[0], G, dG, eps)
        worst["itc_dG"] = max(worst["itc_dG"], err)
    return worst
