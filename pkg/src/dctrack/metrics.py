"""Long-term tracking scores: OPE success/precision, top-K bound, MaxGM, VOT-LT F-score."""
import math
from dataclasses import dataclass, field

import numpy as np

SUCCESS_THRESHOLDS = np.linspace(0.0, 1.0, 101)
PRECISION_THRESHOLDS = np.arange(0, 51, dtype=np.float64)
PRECISION_RADIUS = 20.0
TPR_IOU = 0.5
SWITCH_IOU = 0.5


def iou(a, b):
    """Intersection over union of two ``xyxy`` boxes; 0 when either is degenerate."""
    if a is None or b is None:
        return 0.0
    if a[2] <= a[0] or a[3] <= a[1] or b[2] <= b[0] or b[3] <= b[1]:
        return 0.0
    iw = min(a[2], b[2]) - max(a[0], b[0])
    ih = min(a[3], b[3]) - max(a[1], b[1])
    if iw <= 0 or ih <= 0:
        return 0.0
    inter = iw * ih
    union = (a[2] - a[0]) * (a[3] - a[1]) + (b[2] - b[0]) * (b[3] - b[1]) - inter
    return float(min(1.0, inter / union))


def center_distance(a, b):
    return math.hypot(0.5 * (a[0] + a[2] - b[0] - b[2]), 0.5 * (a[1] + a[3] - b[1] - b[3]))


@dataclass
class SequenceResult:
    """Per-frame predictions aligned with ground truth.

    ``pred_boxes[i]`` is ``None`` when the tracker reports the target absent.
    """
    pred_boxes: list
    confidences: list
    gt_boxes: list
    gt_visible: list
    name: str = ""
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.pred_boxes)
        if not (len(self.confidences) == len(self.gt_boxes) == len(self.gt_visible) == n):
            raise ValueError("prediction and ground-truth frame counts differ")

    def __len__(self):
        return len(self.pred_boxes)

    def ious(self):
        return np.array([iou(p, g) if v else 0.0
                         for p, g, v in zip(self.pred_boxes, self.gt_boxes, self.gt_visible)])


def _valid_frames(result):
    idx = [i for i, v in enumerate(result.gt_visible) if v]
    if not idx:
        raise ValueError("no frames with a visible target")
    return idx


def success_curve(ious):
    ious = np.asarray(ious, dtype=np.float64)
    curve = np.array([np.mean(ious >= 1.0) if t >= 1.0 else np.mean(ious > t)
                      for t in SUCCESS_THRESHOLDS])
    return curve


def _precision_curve(dists):
    dists = np.asarray(dists, dtype=np.float64)
    return np.array([np.mean(dists <= t) for t in PRECISION_THRESHOLDS])


def ope_curves(results, return_curves=False):
    """Success AUC and precision at 20 px over one or more sequences.

    Frames where the target is not visible are excluded; frames where it is
    visible but the tracker reports nothing count as IoU 0 and infinite error.
    """
    if isinstance(results, SequenceResult):
        results = [results]
    ious, dists = [], []
    for r in results:
        for i in _valid_frames(r):
            p, g = r.pred_boxes[i], r.gt_boxes[i]
            ious.append(iou(p, g))
            dists.append(math.inf if p is None else center_distance(p, g))
    succ = success_curve(ious)
    prec = _precision_curve(dists)
    auc = float(np.mean(succ))
    p20 = float(np.mean(np.asarray(dists) <= PRECISION_RADIUS))
    if return_curves:
        return auc, p20, {"success": np.column_stack([SUCCESS_THRESHOLDS, succ]),
                          "precision": np.column_stack([PRECISION_THRESHOLDS, prec])}
    return auc, p20


def topk_upper_bound(candidate_lists, gts, k, visible=None):
    """Success AUC when an oracle picks the best of the ``k`` highest-scored candidates.

    ``candidate_lists[i]`` is a list of ``(box, score)`` pairs.
    """
    if k < 1:
        raise ValueError("k must be at least 1")
    if visible is None:
        visible = [g is not None for g in gts]
    ious = []
    for cands, g, v in zip(candidate_lists, gts, visible):
        if not v:
            continue
        ranked = sorted(cands, key=lambda bs: -bs[1])[:k]
        ious.append(max((iou(b, g) for b, _ in ranked), default=0.0))
    if not ious:
        raise ValueError("no frames with a visible target")
    return float(np.mean(success_curve(ious)))


def max_gm(tpr, tnr):
    """Maximise ``sqrt((1-p) TPR ((1-p) TNR + p))`` over ``p`` in ``[0, 1]``.

    The product inside the root is a quadratic in ``p``, so the maximum sits at
    an endpoint or at its stationary point.
    """
    if not (0.0 <= tpr <= 1.0 and 0.0 <= tnr <= 1.0):
        raise ValueError("tpr and tnr must lie in [0, 1]")
    f = lambda p: (1 - p) * tpr * ((1 - p) * tnr + p)
    cands = [0.0, 1.0]
    if tnr != 1.0:
        p = (2 * tnr - 1) / (2 * tnr - 2)
        cands.append(min(1.0, max(0.0, p)))
    return math.sqrt(max(0.0, max(f(p) for p in cands)))


def tpr_tnr(result, iou_threshold=TPR_IOU):
    """True-positive rate over present frames and true-negative rate over absent ones.

    A present frame is a true positive when the tracker reports a box with
    IoU at least ``iou_threshold``. Either rate is ``None`` when its frame set
    is empty.
    """
    tp = pos = tn = neg = 0
    for p, g, v in zip(result.pred_boxes, result.gt_boxes, result.gt_visible):
        if v:
            pos += 1
            tp += p is not None and iou(p, g) >= iou_threshold
        else:
            neg += 1
            tn += p is None
    return (tp / pos if pos else None), (tn / neg if neg else None)


def vot_lt_fscore(results, thresholds=None, return_curves=False):
    """Best F-score over confidence thresholds, with its precision and recall."""
    if isinstance(results, SequenceResult):
        results = [results]
    ious, conf, reported, vis = [], [], [], []
    for r in results:
        ious.extend(r.ious())
        conf.extend(float(c) for c in r.confidences)
        reported.extend(p is not None for p in r.pred_boxes)
        vis.extend(bool(v) for v in r.gt_visible)
    ious, conf = np.asarray(ious), np.asarray(conf)
    reported, vis = np.asarray(reported, dtype=bool), np.asarray(vis, dtype=bool)
    n_vis = int(vis.sum())
    if n_vis == 0:
        raise ValueError("no frames with a visible target")
    if thresholds is None:
        thresholds = np.unique(conf[reported]) if reported.any() else np.array([0.0])
    best, rows = (0.0, 0.0, 0.0), []
    for th in thresholds:
        rep = reported & (conf >= th)
        hit = rep & vis
        pr = float(ious[hit].mean()) if hit.any() else 0.0
        re = float(ious[hit].sum() / n_vis)
        f = 2 * pr * re / (pr + re) if pr + re > 0 else 0.0
        rows.append((float(th), pr, re, f))
        if f > best[0]:
            best = (f, pr, re)
    if return_curves:
        return best, np.array(rows).reshape(-1, 4)
    return best


def identity_switches(pred_boxes, all_gt_boxes, all_visible, target=0, iou_threshold=SWITCH_IOU):
    """Count frames where the reported box moves to a different ground-truth object.

    Each reported box is attributed to the visible object it overlaps most,
    if that overlap reaches ``iou_threshold``; a switch is a change of that
    attribution relative to the last attributed frame (starting at ``target``).
    """
    last, switches = target, 0
    for f, p in enumerate(pred_boxes):
        if p is None:
            continue
        best, best_iou = None, iou_threshold
        for o in np.flatnonzero(all_visible[f]):
            v = iou(p, all_gt_boxes[f][o])
            if v >= best_iou:
                best, best_iou = int(o), v
        if best is None:
            continue
        if best != last:
            switches += 1
        last = best
    return switches
