"""The three-term large-margin loss over latent space.

Each term compares live latent vectors (from the current train-mode forward
pass) against anchor latents frozen from the epoch's full evaluation pass, so
gradients flow only into the live instances:

- pull each support vector toward its same-label anchors (mean over |S|);
- pull each misclassified instance toward its nearest SVs (mean over |Q|);
- push correctly classified opposite-label pairs apart via the inverse of
  their accumulated squared distance.

Anchor tables index into the frozen latent matrix; rows may be empty and then
contribute nothing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

CC_DENOM_FLOOR = 1e-12


@dataclass
class LossBreakdown:
    l_sv: float
    l_mc: float
    l_cc: float
    total: float
    n_sv: int
    n_q: int
    n_r: int


def _pull_term(live: np.ndarray, frozen: np.ndarray, table: list, divisor: int):
    """sum_i sum_j ||live_i - frozen[table_ij]||^2 / divisor and its gradient."""
    loss = 0.0
    grads = np.zeros_like(live)
    for i, row in enumerate(table):
        if len(row) == 0:
            continue
        diff = live[i] - frozen[row]
        loss += float((diff * diff).sum())
        grads[i] = 2.0 * diff.sum(axis=0)
    return loss / divisor, grads / divisor


def loss_sv(latents_of_s: np.ndarray, frozen: np.ndarray, a_table: list):
    """Support-vector term: mean accumulated squared distance to anchors."""
    n_sv = latents_of_s.shape[0]
    if n_sv == 0:
        raise ValueError("loss_sv: support-vector set is empty")
    if len(a_table) != n_sv:
        raise ValueError(f"loss_sv: {n_sv} latents but {len(a_table)} anchor rows")
    return _pull_term(latents_of_s, frozen, a_table, n_sv)


def loss_mc(latents_of_q: np.ndarray, frozen: np.ndarray, m_table: list):
    """Misclassified term; an empty Q is the normal converged case."""
    n_q = latents_of_q.shape[0]
    if n_q == 0:
        return 0.0, np.zeros_like(latents_of_q)
    if len(m_table) != n_q:
        raise ValueError(f"loss_mc: {n_q} latents but {len(m_table)} anchor rows")
    return _pull_term(latents_of_q, frozen, m_table, n_q)


def loss_cc(latents_of_r: np.ndarray, frozen: np.ndarray, g_table: list):
    """Opposite-class separation term: |R| over the summed squared distances.

    Returns exactly 0 (and zero grads) when every anchor row is empty, which
    is also the disabled case sh_close=0.
    """
    n_r = latents_of_r.shape[0]
    if len(g_table) != n_r:
        raise ValueError(f"loss_cc: {n_r} latents but {len(g_table)} anchor rows")
    if n_r == 0 or all(len(row) == 0 for row in g_table):
        return 0.0, np.zeros_like(latents_of_r)

    denom = 0.0
    sums = np.zeros_like(latents_of_r)
    for i, row in enumerate(g_table):
        if len(row) == 0:
            continue
        diff = latents_of_r[i] - frozen[row]
        denom += float((diff * diff).sum())
        sums[i] = 2.0 * diff.sum(axis=0)
    if denom < CC_DENOM_FLOOR:
        warnings.warn(f"loss_cc: denominator {denom:.3e} clamped to "
                      f"{CC_DENOM_FLOOR} (coincident opposite-class latents)",
                      stacklevel=2)
        denom = CC_DENOM_FLOOR
    value = n_r / denom
    grads = -(n_r / denom ** 2) * sums
    return value, grads


def total_loss(l_sv: float, l_mc: float, l_cc: float,
               n_sv: int, n_q: int, n_r: int) -> LossBreakdown:
    return LossBreakdown(l_sv=l_sv, l_mc=l_mc, l_cc=l_cc,
                         total=l_sv + l_mc + l_cc,
                         n_sv=n_sv, n_q=n_q, n_r=n_r)
