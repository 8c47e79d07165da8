"""Pairwise geometry over latent vectors: squared distances, RBF kernel,
Euclidean distances, and the query-vs-train kernel block used at inference.

P is computed once per epoch and K and D are derived from it. Symmetry is
exact by construction (the upper triangle is mirrored), not just up to
floating-point reassociation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class GeometryMatrices:
    p: np.ndarray        # squared Euclidean distances, n x n
    k: np.ndarray        # RBF kernel exp(-gamma * p)
    d: np.ndarray        # Euclidean distances sqrt(p)
    gamma: float


def pairwise_sq_dist(t: np.ndarray) -> np.ndarray:
    """p_ij = sum_b (t_ib - t_jb)^2 via the Gram expansion.

    Tiny negatives from cancellation are clamped to 0 and the result is made
    exactly symmetric with a zero diagonal.
    """
    t = np.asarray(t, dtype=np.float64)
    sq = (t * t).sum(axis=1)
    p = sq[:, None] + sq[None, :] - 2.0 * (t @ t.T)
    np.maximum(p, 0.0, out=p)
    upper = np.triu(p, k=1)
    return upper + upper.T


def rbf_kernel(p: np.ndarray, gamma: float) -> np.ndarray:
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    return np.exp(-gamma * p)


def dist_matrix(p: np.ndarray) -> np.ndarray:
    if p.min(initial=0.0) < 0:
        raise ValueError("squared distances must be non-negative")
    return np.sqrt(p)


def cross_kernel(t_query: np.ndarray, t_train: np.ndarray, gamma: float) -> np.ndarray:
    """k_ij = exp(-gamma * ||query_i - train_j||^2), an m x n block."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    t_query = np.asarray(t_query, dtype=np.float64)
    t_train = np.asarray(t_train, dtype=np.float64)
    if t_query.ndim != 2 or t_train.ndim != 2 or t_query.shape[1] != t_train.shape[1]:
        raise ValueError(f"latent width mismatch: query {t_query.shape} vs "
                         f"train {t_train.shape}")
    sq_q = (t_query * t_query).sum(axis=1)
    sq_t = (t_train * t_train).sum(axis=1)
    p = sq_q[:, None] + sq_t[None, :] - 2.0 * (t_query @ t_train.T)
    np.maximum(p, 0.0, out=p)
    return np.exp(-gamma * p)


def median_heuristic_gamma(p: np.ndarray) -> float:
    """1 / median of the off-diagonal squared distances; 1.0 when degenerate."""
    n = p.shape[0]
    if n < 2:
        return 1.0
    off = p[~np.eye(n, dtype=bool)]
    med = float(np.median(off))
    if med <= 0.0 or not np.isfinite(med):
        return 1.0
    return 1.0 / med


def build_geometry(t: np.ndarray, gamma: float) -> GeometryMatrices:
    p = pairwise_sq_dist(t)
    return GeometryMatrices(p=p, k=rbf_kernel(p, gamma), d=dist_matrix(p), gamma=gamma)
