"""Anchor-free detection head over correlated features.

Boxes are ``(x1, y1, x2, y2)`` pixels. Regression outputs are
location-to-side distances ``(l, t, r, b)``.
"""
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dynconv import (
    HEAD_DEPTH,
    ChannelPlan,
    Controller,
    CorrelationMethod,
    IntegrationConfig,
    apply_correlation,
    generate_kernels,
    param_count,
    template_crop,
)
from .errors import InvalidBoxError, ShapeError
from .featmap import FeatureMap, conv1x1, global_avg_pool

CENTER_RADIUS = 1.5
HEAD_STRIDES = (8, 16, 32)
EMBED_STRIDE = 4

# final logit = OBJ * objectness + SIM * similarity + BIAS
LOGIT_OBJ = 8.0
LOGIT_SIM = 4.0
LOGIT_BIAS = -6.0
TOWER_WIDTH = 8
ENCODER_WIDTH = 4


def map_location(i, j, stride):
    """Image-space point of grid cell ``(i, j)`` (x index, y index)."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    half = stride // 2
    return half + i * stride, half + j * stride


def location_grid(height, width, stride):
    xs = stride // 2 + np.arange(width) * stride
    ys = stride // 2 + np.arange(height) * stride
    return xs.astype(np.float64), ys.astype(np.float64)


def _check_box(box):
    box = np.asarray(box, dtype=np.float64).ravel()
    if box.size != 4 or not np.all(np.isfinite(box)) or box[2] <= box[0] or box[3] <= box[1]:
        raise InvalidBoxError(f"invalid box {box.tolist()}")
    return box


@dataclass
class SampleAssignment:
    """Per-level labels: ``sigma`` (H x W, 0/1) and ``targets`` (H x W x 4)."""

    sigma: np.ndarray
    targets: np.ndarray
    stride: int
    degenerate: bool = False

    @property
    def num_positive(self):
        return int(self.sigma.sum())

    def positives(self):
        jj, ii = np.nonzero(self.sigma)
        return list(zip(ii.tolist(), jj.tolist()))


def center_region(gt_box, stride, r=CENTER_RADIUS):
    """Sampling box around the gt center, clipped to the gt box."""
    x1, y1, x2, y2 = gt_box
    cx, cy = 0.5 * (x1 + x2), 0.5 * (y1 + y2)
    rs = r * stride
    return (max(cx - rs, x1), max(cy - rs, y1), min(cx + rs, x2), min(cy + rs, y2))


def assign_samples(level_shape, stride, gt_box, r=CENTER_RADIUS):
    """Label each location positive iff its image point is strictly inside the
    center region; positives carry ``(l, t, r, b)`` to the gt sides."""
    if r <= 0:
        raise ValueError("r must be positive")
    gt = _check_box(gt_box)
    height, width = level_shape
    xs, ys = location_grid(height, width, stride)
    rx1, ry1, rx2, ry2 = center_region(gt, stride, r)
    inside_x = (xs > rx1) & (xs < rx2)
    inside_y = (ys > ry1) & (ys < ry2)
    sigma = (inside_y[:, None] & inside_x[None, :]).astype(np.int8)
    targets = np.full((height, width, 4), np.nan)
    X, Y = np.meshgrid(xs, ys)
    ltrb = np.stack([X - gt[0], Y - gt[1], gt[2] - X, gt[3] - Y], axis=-1)
    pos = sigma.astype(bool)
    targets[pos] = ltrb[pos]
    return SampleAssignment(sigma, targets, int(stride), degenerate=not pos.any())


def centerness_target(l, t, r, b):
    """``sqrt(min(l,r)/max(l,r) * min(t,b)/max(t,b))``; 0 where an axis is all zero."""
    l, t, r, b = (np.asarray(v, dtype=np.float64) for v in (l, t, r, b))
    mx_lr = np.maximum(l, r)
    mx_tb = np.maximum(t, b)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = (np.minimum(l, r) / mx_lr) * (np.minimum(t, b) / mx_tb)
    ratio = np.where((mx_lr > 0) & (mx_tb > 0), ratio, 0.0)
    out = np.sqrt(np.clip(ratio, 0.0, 1.0))
    return float(out) if out.ndim == 0 else out


def decode_box(location, ltrb, image_size=None):
    x, y = location
    l, t, r, b = ltrb
    box = np.array([x - l, y - t, x + r, y + b], dtype=np.float64)
    if image_size is not None:
        w, h = image_size
        box[[0, 2]] = np.clip(box[[0, 2]], 0.0, w)
        box[[1, 3]] = np.clip(box[[1, 3]], 0.0, h)
    return box


@dataclass
class Candidate:
    box: np.ndarray
    cls_score: float
    centerness: float
    final_score: float
    embedding: np.ndarray = field(default_factory=lambda: np.zeros(0))
    level: int = 0
    identity: int = -1

    @property
    def xywh(self):
        x1, y1, x2, y2 = self.box
        return (float(x1), float(y1), float(x2 - x1), float(y2 - y1))

    @property
    def center(self):
        return 0.5 * (self.box[0] + self.box[2]), 0.5 * (self.box[1] + self.box[3])

    def to_record(self, frame):
        x, y, w, h = self.xywh
        return {
            "frame": int(frame), "x": x, "y": y, "w": w, "h": h,
            "cls_score": float(self.cls_score), "centerness": float(self.centerness),
            "final_score": float(self.final_score),
            "embedding": [float(v) for v in self.embedding],
        }

    @classmethod
    def from_record(cls, rec):
        x, y, w, h = (float(rec[k]) for k in ("x", "y", "w", "h"))
        return cls(np.array([x, y, x + w, y + h]), float(rec["cls_score"]),
                   float(rec["centerness"]), float(rec["final_score"]),
                   np.asarray(rec.get("embedding", []), dtype=np.float64))


def nms(candidates, iou_threshold=0.5, top_k=5):
    """Greedy IoU suppression by descending ``final_score``."""
    if not candidates:
        return []
    boxes = np.array([c.box for c in candidates])
    scores = np.array([c.final_score for c in candidates])
    keep = kernels.nms(boxes, scores, iou_threshold, top_k)
    return [candidates[i] for i in keep]


# --- correlated head ---------------------------------------------------------

def _identity(n_out, n_in):
    w = np.zeros((n_out, n_in))
    k = min(n_out, n_in)
    w[np.arange(k), np.arange(k)] = 1.0
    return w


def reference_layers(layout, method, tower=TOWER_WIDTH, encoder=ENCODER_WIDTH):
    """Hand-built static weights for the six-layer cls/reg towers.

    Hidden channel 0 carries template similarity, channel 1 objectness; the
    cls predictor mixes them into the foreground logit. The reg tower copies
    the box-side channels through to its 4 outputs.
    """
    method = CorrelationMethod.parse(method)
    A = layout.appearance_dim
    if method is CorrelationMethod.DC:
        cls_in = layout.channels
    elif method is CorrelationMethod.CC:
        cls_in = 2
    else:
        cls_in = 1 + A
    layers = {}

    w1 = np.zeros((tower, cls_in))
    w1[1, 0] = 1.0
    if method in (CorrelationMethod.HP, CorrelationMethod.DW):
        w1[0, 1:] = layout.template_gain if method is CorrelationMethod.HP else 1.0
    elif method is CorrelationMethod.CC:
        w1[0, 1] = 1.0
    layers[("cls", 1)] = (w1, np.zeros(tower))
    for u in range(2, HEAD_DEPTH - 1):
        layers[("cls", u)] = (_identity(tower, tower), np.zeros(tower))
    layers[("cls", HEAD_DEPTH - 1)] = (_identity(encoder, tower), np.zeros(encoder))
    w6 = np.zeros((2, encoder))
    w6[1, 0] = LOGIT_SIM
    w6[1, 1] = LOGIT_OBJ
    layers[("cls", HEAD_DEPTH)] = (w6, np.array([0.0, LOGIT_BIAS]))

    r1 = np.zeros((tower, layout.channels))
    sides = np.arange(layout.channels)[layout.box_sides]
    r1[np.arange(4), sides] = 1.0
    layers[("reg", 1)] = (r1, np.zeros(tower))
    for v in range(2, HEAD_DEPTH - 1):
        layers[("reg", v)] = (_identity(tower, tower), np.zeros(tower))
    layers[("reg", HEAD_DEPTH - 1)] = (_identity(encoder, tower), np.zeros(encoder))
    layers[("reg", HEAD_DEPTH)] = (_identity(4, encoder), np.zeros(4))
    return layers


def reference_plan(layout, tower=TOWER_WIDTH, encoder=ENCODER_WIDTH):
    return ChannelPlan.stacked(layout.channels, tower, encoder)


def constructed_controller(layout, config, plan=None):
    """Controller whose generated kernels reproduce the reference DC head.

    Template-independent parameters sit in the encoder bias; the similarity
    row of cls layer 1 is ``template_gain`` times the pooled appearance
    channels, routed through the encoder weights.
    """
    plan = plan if plan is not None else reference_plan(layout)
    static = reference_layers(layout, CorrelationMethod.DC,
                              plan.spec("cls", 2).in_channels, plan.spec("cls", HEAD_DEPTH).in_channels)
    n = param_count(config, plan)
    weight = np.zeros((n, layout.channels))
    bias = np.zeros(n)
    pos = 0
    app_cols = np.arange(layout.channels)[layout.appearance]
    for key in config.layers():
        w, b = static[key]
        spec = plan.spec(*key)
        if w.shape != (spec.out_channels, spec.in_channels):
            raise ShapeError(f"channel plan for {key} does not match the reference head")
        bias[pos:pos + w.size] = w.ravel()
        if key == ("cls", 1):
            # row 0 of the weight block: similarity = gain * <pooled appearance, f>
            weight[pos + app_cols, app_cols] = layout.template_gain
        pos += w.size
        bias[pos:pos + b.size] = b
        pos += b.size
    return Controller(weight, bias, config, plan)


class DetectionHead:
    """Six-layer cls/reg towers with template information fused in.

    For DC the integrated layers use the generated kernels; every other layer
    uses ``static`` weights. For CC/DW/HP the template is correlated with the
    appearance channels before the cls tower and the reg tower reads the raw
    map.
    """

    def __init__(self, layout, method, static, kernels=None, template=None):
        self.layout = layout
        self.method = CorrelationMethod.parse(method)
        self.static = static
        self.kernels = kernels
        self.template = template
        if self.method is CorrelationMethod.DC and kernels is None:
            raise ShapeError("DC head needs generated kernels")
        if self.method is not CorrelationMethod.DC and template is None:
            raise ShapeError(f"{self.method.value} head needs a template source")

    @classmethod
    def from_template(cls, layout, method, template_map, target_box, config=None,
                      controller=None):
        """Initialise from the first-frame map and annotation."""
        method = CorrelationMethod.parse(method)
        static = reference_layers(layout, method)
        if method is CorrelationMethod.DC:
            config = config if config is not None else IntegrationConfig()
            controller = controller if controller is not None else constructed_controller(layout, config)
            kset = generate_kernels(template_map, target_box, config, controller)
            return cls(layout, method, static, kernels=kset)
        crop = template_crop(template_map, target_box)
        app = crop.select(range(layout.channels)[layout.appearance])
        if method is CorrelationMethod.HP:
            return cls(layout, method, static, template=global_avg_pool(app))
        # CC / DW: scale the crop so its response at the template center is 1
        app_map = template_map.select(range(layout.channels)[layout.appearance])
        resp = apply_correlation(app_map, app, CorrelationMethod.DW).data.sum(axis=0)
        cx = 0.5 * (target_box[0] + target_box[2]) / template_map.stride - 0.5
        cy = 0.5 * (target_box[1] + target_box[3]) / template_map.stride - 0.5
        i = int(np.clip(round(cx), 0, template_map.width - 1))
        j = int(np.clip(round(cy), 0, template_map.height - 1))
        peak = resp[j, i]
        data = crop.data[layout.appearance] / peak if peak > 0 else crop.data[layout.appearance]
        return cls(layout, method, static, template=FeatureMap(data, template_map.stride))

    def _layer(self, branch, u):
        if self.kernels is not None:
            dl = self.kernels.layer(branch, u)
            if dl is not None:
                return dl.weights, dl.bias
        return self.static[(branch, u)]

    def _cls_input(self, fmap):
        if self.method is CorrelationMethod.DC:
            return fmap
        obj = fmap.data[self.layout.objectness][None]
        app = fmap.select(range(self.layout.channels)[self.layout.appearance])
        corr = apply_correlation(app, self.template, self.method)
        return FeatureMap(np.concatenate([obj, corr.data]), fmap.stride)

    def _tower(self, branch, x):
        for u in range(1, HEAD_DEPTH + 1):
            w, b = self._layer(branch, u)
            x = conv1x1(x, w, b)
            if u < HEAD_DEPTH:
                x = FeatureMap(np.maximum(x.data, 0.0), x.stride)
        return x.data

    def forward(self, fmap):
        """Return ``(cls_prob, ltrb_pixels, centerness)`` for one level."""
        logits = self._tower("cls", self._cls_input(fmap))
        cls_prob = 1.0 / (1.0 + np.exp(logits[0] - logits[1]))
        ltrb = np.maximum(self._tower("reg", fmap), 0.0) * fmap.stride
        ctr = centerness_target(*ltrb)
        return cls_prob, ltrb, np.asarray(ctr)


def sample_embedding(embed_map, point):
    """Unit embedding at the stride-4 cell nearest to ``point``."""
    x, y = point
    i = int(np.clip(np.floor(x / embed_map.stride), 0, embed_map.width - 1))
    j = int(np.clip(np.floor(y / embed_map.stride), 0, embed_map.height - 1))
    v = embed_map.data[:, j, i].copy()
    n = np.linalg.norm(v)
    return v / n if n > 0 else v


def detect(search_maps, head, embed_map, top_k=5, score_threshold=0.05, iou_threshold=0.5,
           pre_nms_top_n=100, image_size=None):
    """Run the head on each level, decode, embed, and suppress.

    ``score_threshold`` applies to the classification score; survivors are the
    ``pre_nms_top_n`` best by classification score across levels, then NMS by
    final score keeps at most ``top_k``.
    """
    if embed_map is not None and embed_map.stride != EMBED_STRIDE:
        raise ShapeError(f"embedding map must have stride {EMBED_STRIDE}")
    if image_size is None:
        first = search_maps[0]
        image_size = (first.width * first.stride, first.height * first.stride)
    boxes, cls_s, ctr_s, levels = [], [], [], []
    for fmap in search_maps:
        if fmap.channels != head.layout.channels:
            raise ShapeError(f"level map has {fmap.channels} channels, head expects {head.layout.channels}")
        prob, ltrb, ctr = head.forward(fmap)
        xs, ys = location_grid(fmap.height, fmap.width, fmap.stride)
        X, Y = np.meshgrid(xs, ys)
        keep = prob >= score_threshold
        if not keep.any():
            continue
        lv = ltrb[:, keep]
        bx = np.stack([X[keep] - lv[0], Y[keep] - lv[1], X[keep] + lv[2], Y[keep] + lv[3]], axis=1)
        bx[:, [0, 2]] = np.clip(bx[:, [0, 2]], 0.0, image_size[0])
        bx[:, [1, 3]] = np.clip(bx[:, [1, 3]], 0.0, image_size[1])
        boxes.append(bx)
        cls_s.append(prob[keep])
        ctr_s.append(ctr[keep])
        levels.append(np.full(int(keep.sum()), int(np.log2(fmap.stride))))
    if not boxes:
        return []
    boxes = np.concatenate(boxes)
    cls_s = np.concatenate(cls_s)
    ctr_s = np.concatenate(ctr_s)
    levels = np.concatenate(levels)
    order = np.argsort(-cls_s, kind="stable")[:pre_nms_top_n]
    cands = []
    for k in order:
        box = boxes[k]
        if box[2] <= box[0] or box[3] <= box[1]:
            continue
        c = Candidate(box.copy(), float(cls_s[k]), float(ctr_s[k]),
                      float(cls_s[k] * ctr_s[k]), level=int(levels[k]))
        cands.append(c)
    kept = nms(cands, iou_threshold, top_k)
    if embed_map is not None:
        for c in kept:
            c.embedding = sample_embedding(embed_map, c.center)
    return kept
