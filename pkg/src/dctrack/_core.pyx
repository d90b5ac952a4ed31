# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels: direct convolution, ROI-align, greedy NMS, rectangular LSAP.

Every function here has a twin in ``_purepy`` with the same signature and
results; ``kernels`` picks one at import time.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, floor

cnp.import_array()


def conv2d(const double[:, :, ::1] data, const double[:, :, :, ::1] weight, const double[::1] bias):
    """Zero-padded 'same' cross-correlation for odd kernel sizes."""
    cdef Py_ssize_t C = data.shape[0], H = data.shape[1], W = data.shape[2]
    cdef Py_ssize_t O = weight.shape[0], KH = weight.shape[2], KW = weight.shape[3]
    cdef Py_ssize_t ph = KH // 2, pw = KW // 2
    cdef Py_ssize_t o, c, y, x, dy, dx, yy, y_lo, y_hi, x_lo, x_hi, off
    cdef double w
    cdef double* orow
    cdef const double* drow
    out_arr = np.empty((O, H, W), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    with nogil:
        for o in range(O):
            for y in range(H):
                for x in range(W):
                    out[o, y, x] = bias[o]
            for c in range(C):
                for dy in range(KH):
                    # rows and columns whose tap falls inside the map
                    y_lo = ph - dy if ph > dy else 0
                    y_hi = H + ph - dy if H + ph - dy < H else H
                    for dx in range(KW):
                        w = weight[o, c, dy, dx]
                        if w == 0.0:
                            continue
                        off = dx - pw
                        x_lo = -off if off < 0 else 0
                        x_hi = W - off if off > 0 else W
                        for y in range(y_lo, y_hi):
                            yy = y + dy - ph
                            orow = &out[o, y, 0]
                            drow = &data[c, yy, 0]
                            for x in range(x_lo, x_hi):
                                orow[x] += w * drow[x + off]
    return out_arr


cdef inline void _bilinear_setup(double pos, Py_ssize_t size, Py_ssize_t* lo,
                                 Py_ssize_t* hi, double* wlo, double* whi) nogil:
    # Sample positions are in cell-center index space; beyond one cell outside
    # the grid the sample is zero.
    cdef double frac
    if pos < -1.0 or pos > <double>size:
        lo[0] = 0
        hi[0] = 0
        wlo[0] = 0.0
        whi[0] = 0.0
        return
    if pos < 0.0:
        pos = 0.0
    lo[0] = <Py_ssize_t>floor(pos)
    if lo[0] >= size - 1:
        lo[0] = size - 1
        hi[0] = size - 1
        pos = <double>lo[0]
    else:
        hi[0] = lo[0] + 1
    frac = pos - <double>lo[0]
    wlo[0] = 1.0 - frac
    whi[0] = frac


def roi_align(const double[:, :, ::1] data, double x1, double y1, double x2, double y2,
              Py_ssize_t out_size, Py_ssize_t samples):
    """Average of ``samples**2`` bilinear samples per bin; box in cell units."""
    cdef Py_ssize_t C = data.shape[0], H = data.shape[1], W = data.shape[2]
    cdef double bin_w = (x2 - x1) / out_size, bin_h = (y2 - y1) / out_size
    cdef Py_ssize_t c, by, bx, sy, sx
    cdef Py_ssize_t ylo, yhi, xlo, xhi
    cdef double wylo, wyhi, wxlo, wxhi, ys, xs, acc
    cdef double norm = 1.0 / (samples * samples)
    out_arr = np.zeros((C, out_size, out_size), dtype=np.float64)
    cdef double[:, :, ::1] out = out_arr
    for by in range(out_size):
        for bx in range(out_size):
            for sy in range(samples):
                ys = y1 + (by + (sy + 0.5) / samples) * bin_h - 0.5
                _bilinear_setup(ys, H, &ylo, &yhi, &wylo, &wyhi)
                if wylo == 0.0 and wyhi == 0.0:
                    continue
                for sx in range(samples):
                    xs = x1 + (bx + (sx + 0.5) / samples) * bin_w - 0.5
                    _bilinear_setup(xs, W, &xlo, &xhi, &wxlo, &wxhi)
                    if wxlo == 0.0 and wxhi == 0.0:
                        continue
                    for c in range(C):
                        acc = (wylo * (wxlo * data[c, ylo, xlo] + wxhi * data[c, ylo, xhi])
                               + wyhi * (wxlo * data[c, yhi, xlo] + wxhi * data[c, yhi, xhi]))
                        out[c, by, bx] += acc * norm
    return out_arr


cdef inline double _iou(const double[:, ::1] b, Py_ssize_t i, Py_ssize_t j) nogil:
    cdef double iw = min(b[i, 2], b[j, 2]) - max(b[i, 0], b[j, 0])
    cdef double ih = min(b[i, 3], b[j, 3]) - max(b[i, 1], b[j, 1])
    cdef double inter, ua
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    ua = ((b[i, 2] - b[i, 0]) * (b[i, 3] - b[i, 1])
          + (b[j, 2] - b[j, 0]) * (b[j, 3] - b[j, 1]) - inter)
    if ua <= 0.0:
        return 0.0
    return inter / ua


def nms(const double[:, ::1] boxes, const double[::1] scores, double iou_threshold, Py_ssize_t top_k):
    """Greedy suppression; returns kept indices in descending score order."""
    cdef Py_ssize_t n = boxes.shape[0], a, b, idx, nkeep = 0
    cdef bint ok
    order = np.argsort(-np.asarray(scores), kind="stable")
    cdef cnp.intp_t[::1] order_v = order
    keep_arr = np.empty(n, dtype=np.intp)
    cdef cnp.intp_t[::1] keep = keep_arr
    for a in range(n):
        if nkeep >= top_k:
            break
        idx = order_v[a]
        ok = True
        for b in range(nkeep):
            if _iou(boxes, idx, keep[b]) > iou_threshold:
                ok = False
                break
        if ok:
            keep[nkeep] = idx
            nkeep += 1
    return keep_arr[:nkeep].copy()


def lsap(cost_in):
    """Rectangular linear sum assignment by shortest augmenting paths.

    ``inf`` entries are forbidden. Returns ``(rows, cols)`` sorted by row.
    Raises ``ValueError`` when no complete assignment of the smaller side
    exists.
    """
    cost_np = np.ascontiguousarray(cost_in, dtype=np.float64)
    if cost_np.ndim != 2:
        raise ValueError("cost matrix must be 2-D")
    transposed = cost_np.shape[0] > cost_np.shape[1]
    if transposed:
        cost_np = np.ascontiguousarray(cost_np.T)
    cdef double[:, ::1] cost = cost_np
    cdef Py_ssize_t n = cost.shape[0], m = cost.shape[1]
    if n == 0:
        empty = np.empty(0, dtype=np.intp)
        return empty, empty.copy()

    u_arr = np.zeros(n)
    v_arr = np.zeros(m)
    shortest_arr = np.empty(m)
    col4row_arr = np.full(n, -1, dtype=np.intp)
    row4col_arr = np.full(m, -1, dtype=np.intp)
    path_arr = np.full(m, -1, dtype=np.intp)
    remaining_arr = np.empty(m, dtype=np.intp)
    sr_arr = np.zeros(n, dtype=np.uint8)
    sc_arr = np.zeros(m, dtype=np.uint8)
    cdef double[::1] u = u_arr, v = v_arr, shortest = shortest_arr
    cdef cnp.intp_t[::1] col4row = col4row_arr, row4col = row4col_arr
    cdef cnp.intp_t[::1] path = path_arr, remaining = remaining_arr
    cdef unsigned char[::1] SR = sr_arr, SC = sc_arr
    cdef Py_ssize_t cur_row, i, j, it, index, num_remaining, sink, tmp
    cdef double min_val, lowest, r

    for cur_row in range(n):
        min_val = 0.0
        i = cur_row
        num_remaining = m
        for it in range(m):
            remaining[it] = m - it - 1
            shortest[it] = INFINITY
            SC[it] = 0
        for it in range(n):
            SR[it] = 0
        sink = -1
        while sink == -1:
            index = -1
            lowest = INFINITY
            SR[i] = 1
            for it in range(num_remaining):
                j = remaining[it]
                r = min_val + cost[i, j] - u[i] - v[j]
                if r < shortest[j]:
                    path[j] = i
                    shortest[j] = r
                if shortest[j] < lowest or (shortest[j] == lowest and row4col[j] == -1):
                    lowest = shortest[j]
                    index = it
            min_val = lowest
            if min_val == INFINITY:
                raise ValueError("cost matrix is infeasible")
            j = remaining[index]
            if row4col[j] == -1:
                sink = j
            else:
                i = row4col[j]
            SC[j] = 1
            num_remaining -= 1
            remaining[index] = remaining[num_remaining]

        u[cur_row] += min_val
        for i in range(n):
            if SR[i] and i != cur_row:
                u[i] += min_val - shortest[col4row[i]]
        for j in range(m):
            if SC[j]:
                v[j] -= min_val - shortest[j]

        j = sink
        while True:
            i = path[j]
            row4col[j] = i
            tmp = col4row[i]
            col4row[i] = j
            j = tmp
            if i == cur_row:
                break

    rows = np.arange(n, dtype=np.intp)
    cols = col4row_arr.copy()
    if transposed:
        order = np.argsort(cols)
        return cols[order], rows[order]
    return rows, cols
