"""Detection and re-id losses with analytic gradients, plus a finite-difference checker.

Every ``*_grad`` function returns ``(loss, gradient)``; gradients for the
focal loss are taken with respect to the logit, the others with respect to
their direct inputs.
"""
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NumericalWarning, ShapeError

EPS = 1e-12
LEVELS = (3, 4, 5)
HEADS = ("cls", "reg", "ctr")
FOCAL_ALPHA = 0.25
FOCAL_GAMMA = 2.0


def _clamp_prob(p, what):
    p = np.asarray(p, dtype=np.float64)
    if np.any(p < EPS) or np.any(p > 1.0 - EPS):
        warnings.warn(f"{what}: probability clamped to [{EPS}, 1 - {EPS}]", NumericalWarning)
        p = np.clip(p, EPS, 1.0 - EPS)
    return p


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    return np.where(z >= 0, 1.0 / (1.0 + np.exp(-np.abs(z))), np.exp(-np.abs(z)) / (1.0 + np.exp(-np.abs(z))))


def focal_loss(pred_prob, sigma, alpha=FOCAL_ALPHA, gamma=FOCAL_GAMMA):
    """Summed binary focal loss over locations; ``sigma`` marks positives."""
    p = _clamp_prob(pred_prob, "focal_loss")
    s = np.asarray(sigma, dtype=bool)
    pos = -alpha * (1 - p) ** gamma * np.log(p)
    neg = -(1 - alpha) * p ** gamma * np.log(1 - p)
    return float(np.sum(np.where(s, pos, neg)))


def focal_loss_grad(logits, sigma, alpha=FOCAL_ALPHA, gamma=FOCAL_GAMMA):
    """Loss and its gradient with respect to the logits ``z`` where ``p = sigmoid(z)``."""
    p = _clamp_prob(sigmoid(logits), "focal_loss")
    s = np.asarray(sigma, dtype=bool)
    q = 1 - p
    loss = focal_loss(p, s, alpha, gamma)
    # dp/dz = p q
    g_pos = alpha * q ** gamma * (gamma * p * np.log(p) - q)
    g_neg = (1 - alpha) * p ** gamma * (p - gamma * q * np.log(q))
    return loss, np.where(s, g_pos, g_neg)


def _iou_ltrb(pred, target):
    pl, pt, pr, pb = pred
    tl, tt, tr, tb = target
    area_p = (pl + pr) * (pt + pb)
    area_t = (tl + tr) * (tt + tb)
    iw = np.minimum(pl, tl) + np.minimum(pr, tr)
    ih = np.minimum(pt, tt) + np.minimum(pb, tb)
    inter = iw * ih
    union = area_p + area_t - inter
    return inter, union, iw, ih


def iou_loss(pred_ltrb, target_ltrb, sigma=None):
    """Summed ``-ln IoU`` between boxes decoded at the same location.

    Inputs are ``(..., 4)`` arrays of left/top/right/bottom distances. Only
    locations with ``sigma`` set contribute (all, when ``sigma`` is None).
    """
    return iou_loss_grad(pred_ltrb, target_ltrb, sigma)[0]


def iou_loss_grad(pred_ltrb, target_ltrb, sigma=None):
    pred = np.asarray(pred_ltrb, dtype=np.float64)
    target = np.asarray(target_ltrb, dtype=np.float64)
    if pred.shape != target.shape or pred.shape[-1] != 4:
        raise ShapeError("iou_loss expects matching (..., 4) ltrb arrays")
    if np.any(pred < 0) or np.any(target < 0):
        raise ValueError("ltrb distances must be non-negative")
    mask = np.ones(pred.shape[:-1], dtype=bool) if sigma is None else np.asarray(sigma, dtype=bool)
    P = np.moveaxis(pred, -1, 0)
    T = np.moveaxis(target, -1, 0)
    inter, union, iw, ih = _iou_ltrb(P, T)
    with np.errstate(divide="ignore", invalid="ignore"):
        iou = np.where(union > 0, inter / union, 0.0)
    if np.any(mask & (iou < EPS)):
        warnings.warn(f"iou_loss: IoU clamped at {EPS}", NumericalWarning)
    clamped = iou < EPS
    iou = np.maximum(iou, EPS)
    loss = float(np.sum(np.where(mask, -np.log(iou), 0.0)))

    # d(-ln I/U) = dU/U - dI/I ; gradients of min pick the prediction side when it is smaller
    grad = np.zeros_like(P)
    safe_inter = np.where(inter > 0, inter, 1.0)
    safe_union = np.where(union > 0, union, 1.0)
    for k, (a, b) in enumerate([(1, 3), (0, 2), (1, 3), (0, 2)]):
        # side k enlarges the area by the perpendicular extent (P[a] + P[b])
        d_area = P[a] + P[b]
        sel = P[k] < T[k]
        other = ih if k in (0, 2) else iw
        d_inter = np.where(sel, other, 0.0)
        d_union = d_area - d_inter
        grad[k] = d_union / safe_union - d_inter / safe_inter
    grad = np.where(mask & ~clamped, grad, 0.0)
    return loss, np.moveaxis(grad, 0, -1)


def centerness_bce(pred, target, sigma=None):
    return centerness_bce_grad(pred, target, sigma)[0]


def centerness_bce_grad(pred, target, sigma=None):
    """Binary cross-entropy on positives and its gradient with respect to ``pred``."""
    p = _clamp_prob(pred, "centerness_bce")
    t = np.asarray(target, dtype=np.float64)
    if np.any(t < 0) or np.any(t > 1):
        raise ValueError("center-ness targets must lie in [0, 1]")
    mask = np.ones(np.broadcast(p, t).shape, dtype=bool) if sigma is None else np.asarray(sigma, dtype=bool)
    terms = -(t * np.log(p) + (1 - t) * np.log(1 - p))
    grad = (p - t) / (p * (1 - p))
    return float(np.sum(np.where(mask, terms, 0.0))), np.where(mask, grad, 0.0)


@dataclass
class LossWeights:
    lambdas: dict = field(default_factory=lambda: {(m, n): 1.0 for m in LEVELS for n in HEADS})
    task_log_vars: tuple = (0.0, 0.0)

    def __post_init__(self):
        for key, v in self.lambdas.items():
            if key not in {(m, n) for m in LEVELS for n in HEADS}:
                raise ConfigError(f"unknown loss weight {key}")
            if not (v >= 0 and math.isfinite(v)):
                raise ConfigError(f"loss weight {key} must be a finite non-negative number, got {v}")
        if len(self.task_log_vars) != 2:
            raise ConfigError("task_log_vars needs exactly two entries")

    def get(self, level, head):
        return self.lambdas.get((level, head), 1.0)

    def to_dict(self):
        return {"lambda": {f"P{m}": {n: self.get(m, n) for n in HEADS} for m in LEVELS},
                "task_log_vars": list(self.task_log_vars)}

    @classmethod
    def from_dict(cls, d):
        lam = {(m, n): 1.0 for m in LEVELS for n in HEADS}
        for level_key, heads in (d.get("lambda") or {}).items():
            try:
                m = int(str(level_key).lstrip("Pp"))
            except ValueError:
                raise ConfigError(f"bad loss level {level_key!r}") from None
            for n, v in heads.items():
                if (m, n) not in lam:
                    raise ConfigError(f"unknown loss weight P{m}.{n}")
                lam[(m, n)] = float(v)
        return cls(lam, tuple(float(v) for v in d.get("task_log_vars", (0.0, 0.0))))


def detection_loss(per_level_terms, weights=None):
    """Weighted sum over levels and heads; ``per_level_terms[m][n]`` is a scalar."""
    weights = weights or LossWeights()
    parts = []
    for m in LEVELS:
        for n in HEADS:
            try:
                v = per_level_terms[m][n]
            except (KeyError, IndexError, TypeError):
                raise ConfigError(f"missing loss term for level P{m}, head {n}") from None
            parts.append(weights.get(m, n) * float(v))
    return math.fsum(parts)


def cross_query_loss(per_pair_losses):
    """Mean detection loss over the template/search pairs of one search image."""
    vals = [float(v) for v in per_pair_losses]
    if not vals:
        raise ValueError("cross_query_loss needs at least one pair")
    return math.fsum(vals) / len(vals)


@dataclass
class ReidBatch:
    embeddings: np.ndarray  # M x D
    labels: np.ndarray  # M
    classifier: np.ndarray  # J x D

    def __post_init__(self):
        self.embeddings = np.atleast_2d(np.asarray(self.embeddings, dtype=np.float64))
        self.labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        self.classifier = np.atleast_2d(np.asarray(self.classifier, dtype=np.float64))
        M, D = self.embeddings.shape
        J = self.classifier.shape[0]
        if M < 1 or J < 2:
            raise ValueError("re-id batch needs at least one object and two classes")
        if self.classifier.shape[1] != D or self.labels.shape[0] != M:
            raise ShapeError("re-id batch dimensions disagree")
        if np.any(self.labels < 0) or np.any(self.labels >= J):
            raise ValueError("identity label out of range")


def reid_softmax_loss(batch):
    return reid_softmax_grad(batch)[0]


def reid_softmax_grad(batch):
    """Summed softmax cross-entropy and gradients ``(d_embeddings, d_classifier)``."""
    logits = batch.embeddings @ batch.classifier.T
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1))
    rows = np.arange(len(batch.labels))
    loss = float(np.sum(log_z - shifted[rows, batch.labels]))
    G = np.exp(shifted - log_z[:, None])
    G[rows, batch.labels] -= 1.0
    return loss, (G @ batch.classifier, G.T @ batch.embeddings)


def balanced_total(det_loss, reid_loss, task_log_vars=(0.0, 0.0)):
    """Uncertainty-weighted sum of the detection and re-id losses."""
    s1, s2 = task_log_vars
    return 0.5 * (math.exp(-s1) * det_loss + math.exp(-s2) * reid_loss + s1 + s2)


def numeric_grad(loss_fn, point, epsilon=1e-6):
    x = np.array(point, dtype=np.float64)
    g = np.zeros_like(x)
    flat, gf = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + epsilon
        hi = loss_fn(x)
        flat[i] = orig - epsilon
        lo = loss_fn(x)
        flat[i] = orig
        gf[i] = (hi - lo) / (2 * epsilon)
    return g


def grad_check(loss_fn, point, epsilon=1e-6, analytic=None):
    """Largest relative error between an analytic and a central-difference gradient.

    ``loss_fn(x)`` returns ``(loss, grad)`` unless ``analytic`` is given, in
    which case ``loss_fn`` returns only the loss and ``analytic(x)`` the
    gradient.
    """
    x = np.array(point, dtype=np.float64)
    if analytic is None:
        value = lambda v: loss_fn(v)[0]
        a = np.asarray(loss_fn(x)[1], dtype=np.float64)
    else:
        value = loss_fn
        a = np.asarray(analytic(x), dtype=np.float64)
    n = numeric_grad(value, x, epsilon)
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), 1e-10)
    return float(np.max(np.abs(a - n) / denom))
