"""Instance partitioning and anchor-table construction.

After each epoch's SVM retraining the training set splits into S (support
vectors), Q (misclassified non-SVs) and R (the correctly classified rest).
Three anchor tables are then read off the distance matrix:

- type 1 (table A): for each SV, the nearest correctly classified non-SV
  instances of the same label;
- type 2 (table M): for each misclassified instance, the nearest SVs;
- type 3 (table G): for each R member, the nearest R members of the
  opposite label.

Ineligible candidates are excluded by masking. Rows are sorted by ascending
distance, ties broken by ascending instance index, and may be shorter than
requested (or empty) when eligible candidates run out.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass
class InstancePartition:
    s: np.ndarray             # support-vector indices, ascending
    q: np.ndarray             # misclassified non-SV indices, ascending
    r: np.ndarray             # everything else, ascending
    labels: np.ndarray        # -1/+1 per training instance
    predictions: np.ndarray   # -1/+1 per training instance
    n_misclassified_svs: int  # SVs whose prediction disagrees; kept in S


@dataclass
class AnchorTables:
    a: list   # per-SV index arrays into the training set
    m: list   # per-Q-instance index arrays
    g: list   # per-R-instance index arrays


def partition(labels, predictions, sv_indices) -> InstancePartition:
    """Split [0, n) into S, Q, R. A misclassified SV stays in S, not Q."""
    labels = np.asarray(labels, dtype=np.float64)
    predictions = np.asarray(predictions, dtype=np.float64)
    n = labels.shape[0]
    s = np.sort(np.asarray(sv_indices, dtype=np.intp))
    in_s = np.zeros(n, dtype=bool)
    in_s[s] = True
    wrong = predictions != labels
    q = np.flatnonzero(wrong & ~in_s)
    r = np.flatnonzero(~wrong & ~in_s)
    return InstancePartition(
        s=s, q=q, r=r, labels=labels, predictions=predictions,
        n_misclassified_svs=int((wrong & in_s).sum()))


def _nearest(d_row: np.ndarray, candidates: np.ndarray, k: int) -> np.ndarray:
    """The k nearest candidates by distance, ties to the lower index."""
    if k <= 0 or candidates.size == 0:
        return np.empty(0, dtype=np.intp)
    order = np.argsort(d_row[candidates], kind="stable")
    return candidates[order[:k]]


def type1_anchors(d: np.ndarray, part: InstancePartition, sv_close: int) -> list:
    """Per-SV nearest same-label, correctly classified, non-SV instances."""
    in_s = np.zeros(part.labels.shape[0], dtype=bool)
    in_s[part.s] = True
    base = ~in_s & (part.predictions == part.labels)
    rows = []
    empty = 0
    for sv in part.s:
        candidates = np.flatnonzero(base & (part.labels == part.labels[sv]))
        row = _nearest(d[sv], candidates, sv_close)
        if row.size == 0 and sv_close > 0:
            empty += 1
        rows.append(row)
    if empty:
        warnings.warn(f"type1_anchors: {empty} of {len(part.s)} SVs have no "
                      f"eligible anchor", stacklevel=2)
    return rows


def type2_anchors(d: np.ndarray, part: InstancePartition, wr_close: int) -> list:
    """Per-misclassified-instance nearest SVs."""
    if part.s.size == 0:
        raise ValueError("type2_anchors: support-vector set is empty")
    return [_nearest(d[qi], part.s, wr_close) for qi in part.q]


def type3_anchors(d: np.ndarray, part: InstancePartition, sh_close: int) -> list:
    """Per-R-member nearest opposite-label R members."""
    rows = []
    empty = 0
    for ri in part.r:
        candidates = part.r[part.labels[part.r] != part.labels[ri]]
        row = _nearest(d[ri], candidates, sh_close)
        if row.size == 0 and sh_close > 0:
            empty += 1
        rows.append(row)
    if empty:
        warnings.warn(f"type3_anchors: {empty} of {len(part.r)} R members have "
                      f"no opposite-label anchor", stacklevel=2)
    return rows


def build_anchor_tables(d: np.ndarray, part: InstancePartition,
                        sv_close: int, wr_close: int, sh_close: int) -> AnchorTables:
    return AnchorTables(
        a=type1_anchors(d, part, sv_close),
        m=type2_anchors(d, part, wr_close) if part.q.size else [],
        g=type3_anchors(d, part, sh_close),
    )
