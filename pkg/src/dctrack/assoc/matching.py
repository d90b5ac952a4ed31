"""Distances and gated minimum-cost assignment."""
import math
from dataclasses import dataclass, field

import numpy as np

from .. import kernels


def embed_distance(a, b):
    """Cosine distance ``1 - <a, b> / (|a| |b|)`` in ``[0, 2]``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        raise ValueError("embed_distance of a zero vector")
    return float(np.clip(1.0 - (a @ b) / (na * nb), 0.0, 2.0))


def embedding_distance_matrix(A, B):
    """Pairwise cosine distances; rows with a zero vector get distance 1."""
    A = np.asarray(A, dtype=np.float64).reshape(len(A), -1)
    B = np.asarray(B, dtype=np.float64).reshape(len(B), -1)
    if A.size == 0 or B.size == 0:
        return np.ones((len(A), len(B)))
    na = np.linalg.norm(A, axis=1)
    nb = np.linalg.norm(B, axis=1)
    safe_a = np.where(na > 0, na, 1.0)
    safe_b = np.where(nb > 0, nb, 1.0)
    d = 1.0 - (A / safe_a[:, None]) @ (B / safe_b[:, None]).T
    d[na == 0, :] = 1.0
    d[:, nb == 0] = 1.0
    return np.clip(d, 0.0, 2.0)


def box_iou(a, b):
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return float(inter / union) if union > 0 else 0.0


def iou_matrix(A, B):
    A = np.asarray(A, dtype=np.float64).reshape(-1, 4)
    B = np.asarray(B, dtype=np.float64).reshape(-1, 4)
    iw = np.minimum(A[:, None, 2], B[None, :, 2]) - np.maximum(A[:, None, 0], B[None, :, 0])
    ih = np.minimum(A[:, None, 3], B[None, :, 3]) - np.maximum(A[:, None, 1], B[None, :, 1])
    inter = np.clip(iw, 0, None) * np.clip(ih, 0, None)
    area_a = (A[:, 2] - A[:, 0]) * (A[:, 3] - A[:, 1])
    area_b = (B[:, 2] - B[:, 0]) * (B[:, 3] - B[:, 1])
    union = area_a[:, None] + area_b[None, :] - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where((inter > 0) & (union > 0), inter / union, 0.0)


@dataclass
class Assignment:
    matches: list = field(default_factory=list)
    unmatched_rows: list = field(default_factory=list)
    unmatched_cols: list = field(default_factory=list)
    total_cost: float = 0.0


def hungarian(cost, gate=math.inf):
    """Minimum-cost one-to-one assignment; entries above ``gate`` are forbidden.

    With a finite gate, leaving a row or column unmatched costs ``gate / 2``,
    so a pair is kept only when it beats leaving both ends free: the result
    minimises the sum of ``cost - gate`` over matched pairs. With an infinite
    gate the smaller side is matched completely.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost must be a 2-D matrix")
    n, m = cost.shape
    if n == 0 or m == 0:
        return Assignment([], list(range(n)), list(range(m)), 0.0)
    if not np.all(np.isfinite(cost)):
        raise ValueError("cost entries must be finite")

    if math.isinf(gate):
        rows, cols = kernels.lsap(cost)
        pairs = list(zip(rows.tolist(), cols.tolist()))
    else:
        allowed = cost <= gate
        if not allowed.any():
            return Assignment([], list(range(n)), list(range(m)), 0.0)
        big = np.full((n + m, m + n), math.inf)
        big[:n, :m] = np.where(allowed, cost, math.inf)
        big[np.arange(n), m + np.arange(n)] = gate / 2.0
        big[n + np.arange(m), np.arange(m)] = gate / 2.0
        big[n:, m:] = 0.0
        rows, cols = kernels.lsap(big)
        pairs = [(int(r), int(c)) for r, c in zip(rows, cols) if r < n and c < m]

    pairs.sort()
    matched_r = {r for r, _ in pairs}
    matched_c = {c for _, c in pairs}
    return Assignment(
        pairs,
        [r for r in range(n) if r not in matched_r],
        [c for c in range(m) if c not in matched_c],
        math.fsum(cost[r, c] for r, c in pairs),
    )
