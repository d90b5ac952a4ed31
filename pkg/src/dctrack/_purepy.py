"""NumPy fallback for the compiled kernels in ``_core``.

Same signatures, same conventions, results equal to rounding.
"""
import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d(data, weight, bias):
    C, H, W = data.shape
    O, _, KH, KW = weight.shape
    ph, pw = KH // 2, KW // 2
    padded = np.pad(data, ((0, 0), (ph, ph), (pw, pw)))
    # windows: (C, H, W, KH, KW)
    windows = sliding_window_view(padded, (KH, KW), axis=(1, 2))
    out = np.einsum("chwij,ocij->ohw", windows, weight, optimize=True)
    return out + bias[:, None, None]


def _axis_weights(start, stop, out_size, samples, size):
    """(out_size, size) matrix of bin-averaged bilinear weights along one axis."""
    weights = np.zeros((out_size, size))
    step = (stop - start) / out_size
    for b in range(out_size):
        for s in range(samples):
            pos = start + (b + (s + 0.5) / samples) * step - 0.5
            if pos < -1.0 or pos > size:
                continue
            pos = max(pos, 0.0)
            lo = int(np.floor(pos))
            if lo >= size - 1:
                weights[b, size - 1] += 1.0 / samples
                continue
            frac = pos - lo
            weights[b, lo] += (1.0 - frac) / samples
            weights[b, lo + 1] += frac / samples
    return weights


def roi_align(data, x1, y1, x2, y2, out_size, samples):
    _, H, W = data.shape
    wy = _axis_weights(y1, y2, out_size, samples, H)
    wx = _axis_weights(x1, x2, out_size, samples, W)
    return np.einsum("ph,chw,qw->cpq", wy, data, wx)


def _iou_one_to_many(box, boxes):
    iw = np.minimum(box[2], boxes[:, 2]) - np.maximum(box[0], boxes[:, 0])
    ih = np.minimum(box[3], boxes[:, 3]) - np.maximum(box[1], boxes[:, 1])
    inter = np.where((iw > 0) & (ih > 0), iw * ih, 0.0)
    area = (box[2] - box[0]) * (box[3] - box[1])
    areas = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    union = area + areas - inter
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where((inter > 0) & (union > 0), inter / union, 0.0)


def nms(boxes, scores, iou_threshold, top_k):
    order = np.argsort(-np.asarray(scores), kind="stable")
    keep = []
    for idx in order:
        if len(keep) >= top_k:
            break
        if keep and np.any(_iou_one_to_many(boxes[idx], boxes[keep]) > iou_threshold):
            continue
        keep.append(idx)
    return np.asarray(keep, dtype=np.intp)


def lsap(cost_in):
    cost = np.asarray(cost_in, dtype=np.float64)
    if cost.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    transposed = cost.shape[0] > cost.shape[1]
    if transposed:
        cost = cost.T
    n, m = cost.shape
    if n == 0:
        return np.empty(0, dtype=np.intp), np.empty(0, dtype=np.intp)

    u = np.zeros(n)
    v = np.zeros(m)
    col4row = np.full(n, -1, dtype=np.intp)
    row4col = np.full(m, -1, dtype=np.intp)
    path = np.full(m, -1, dtype=np.intp)

    for cur_row in range(n):
        shortest = np.full(m, np.inf)
        remaining = np.ones(m, dtype=bool)
        SR = np.zeros(n, dtype=bool)
        min_val = 0.0
        i = cur_row
        sink = -1
        while sink == -1:
            SR[i] = True
            r = min_val + cost[i] - u[i] - v
            better = remaining & (r < shortest)
            path[better] = i
            shortest[better] = r[better]
            cand = np.flatnonzero(remaining)
            vals = shortest[cand]
            lowest = vals.min()
            if lowest == np.inf:
                raise ValueError("cost matrix is infeasible")
            ties = cand[vals == lowest]
            free = ties[row4col[ties] == -1]
            j = free[0] if free.size else ties[0]
            min_val = lowest
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
            remaining[j] = False

        u[cur_row] += min_val
        others = SR.copy()
        others[cur_row] = False
        rows = np.flatnonzero(others)
        u[rows] += min_val - shortest[col4row[rows]]
        SC = ~remaining
        v[SC] -= min_val - shortest[SC]

        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            col4row[i], j = j, col4row[i]
            if i == cur_row:
                break

    rows = np.arange(n, dtype=np.intp)
    if transposed:
        order = np.argsort(col4row)
        return col4row[order], rows[order]
    return rows, col4row.copy()
