"""Hot-loop kernels with a compiled backend and a NumPy fallback.

The compiled extension ``dctrack._core`` is used when it imports; otherwise,
or when ``DCTRACK_PURE_PYTHON=1`` is set, the NumPy versions in
``dctrack._purepy`` are used. ``BACKEND`` names the active choice.
"""
import os

import numpy as np

from . import _purepy

if os.environ.get("DCTRACK_PURE_PYTHON", "") not in ("", "0"):
    _compiled = None
else:
    try:
        from . import _core as _compiled
    except ImportError:  # extension not built
        _compiled = None

_impl = _compiled if _compiled is not None else _purepy
BACKEND = "cython" if _compiled is not None else "python"


def backends():
    """Mapping of available backend names to implementation modules."""
    found = {"python": _purepy}
    if _compiled is not None:
        found["cython"] = _compiled
    return found


def conv2d(data, weight, bias):
    data = np.ascontiguousarray(data, dtype=np.float64)
    weight = np.ascontiguousarray(weight, dtype=np.float64)
    bias = np.ascontiguousarray(bias, dtype=np.float64)
    # spatial kernels go through the BLAS-backed contraction, which beats the direct loop
    impl = _impl if weight.shape[2] * weight.shape[3] == 1 else _purepy
    return impl.conv2d(data, weight, bias)


def roi_align(data, box, out_size, samples):
    data = np.ascontiguousarray(data, dtype=np.float64)
    x1, y1, x2, y2 = (float(v) for v in box)
    return _impl.roi_align(data, x1, y1, x2, y2, int(out_size), int(samples))


def nms(boxes, scores, iou_threshold, top_k):
    boxes = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 4)
    scores = np.ascontiguousarray(scores, dtype=np.float64).reshape(-1)
    return _impl.nms(boxes, scores, float(iou_threshold), int(top_k))


def lsap(cost):
    return _impl.lsap(cost)
