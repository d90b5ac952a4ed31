"""Sequence-level runs: detection source + tracker, and the ablation grid."""
import time
from dataclasses import dataclass, field

import numpy as np

from . import metrics, sim
from .assoc import AssociationConfig, Tracker
from .dethead import DetectionHead, detect, sample_embedding
from .dynconv import CorrelationMethod, IntegrationConfig
from .errors import ConfigError
from .featmap import FeatureLayout

TRACK_MODES = ("full", "assoc", "reid", "top1", "pc")
ASSOCIATION_MODES = ("top1", "pc", "reid")
CORRELATIONS = ("cc", "dw", "hp", "dc")


@dataclass
class DetectorOptions:
    top_k: int = 5
    nms_iou: float = 0.5
    score_threshold: float = 0.05
    pre_nms_top_n: int = 100

    def __post_init__(self):
        if self.top_k < 1:
            raise ConfigError(f"detector.top_k must be at least 1, got {self.top_k}")
        if not 0.0 < self.nms_iou <= 1.0:
            raise ConfigError(f"detector.nms_iou must be in (0, 1], got {self.nms_iou}")
        if not 0.0 <= self.score_threshold < 1.0:
            raise ConfigError(f"detector.score_threshold must be in [0, 1), got {self.score_threshold}")
        if self.pre_nms_top_n < self.top_k:
            raise ConfigError("detector.pre_nms_top_n must be at least top_k")


@dataclass
class TrackRun:
    name: str
    outputs: list
    candidates: list  # per frame
    runtime_ms: float
    extra: dict = field(default_factory=dict)

    def pred_boxes(self):
        return [o.box if o.present else None for o in self.outputs]

    def result(self, seq):
        return metrics.SequenceResult(self.pred_boxes(), [o.confidence for o in self.outputs],
                                      list(seq.boxes[:, seq.target]), list(seq.visible[:, seq.target]),
                                      name=self.name)

    def identity_switches(self, seq):
        return metrics.identity_switches(self.pred_boxes(), seq.boxes, seq.visible, seq.target)


class RenderedDetector:
    """One-shot detector over simulator feature maps, initialised on frame 0."""

    def __init__(self, seq, correlation="dc", integration=None, options=None, layout=None):
        self.seq = seq
        self.layout = layout or FeatureLayout()
        self.options = options or DetectorOptions()
        self.correlation = CorrelationMethod.parse(correlation)
        levels, embed = sim.render_feature_maps(seq, 0, self.layout)
        box = seq.target_box(0)
        self.head = DetectionHead.from_template(self.layout, self.correlation, levels[0], box,
                                                config=integration or IntegrationConfig())
        self.target_embedding = sample_embedding(embed, ((box[0] + box[2]) / 2, (box[1] + box[3]) / 2))
        self._first = (levels, embed)

    def render(self, frame):
        if frame == 0 and self._first is not None:
            return self._first
        return sim.render_feature_maps(self.seq, frame, self.layout)

    def detect_rendered(self, levels, embed):
        o = self.options
        return detect(levels, self.head, embed, top_k=o.top_k, score_threshold=o.score_threshold,
                      iou_threshold=o.nms_iou, pre_nms_top_n=o.pre_nms_top_n,
                      image_size=(self.seq.image_size, self.seq.image_size))

    def __call__(self, frame):
        return self.detect_rendered(*self.render(frame))


def oracle_target_embedding(seq):
    cands = sim.oracle_detect(seq, 0)
    hit = [c for c in cands if c.identity == seq.target]
    if not hit:
        raise ConfigError("target must be visible in the first frame")
    return hit[0].embedding


def split_mode(mode):
    """Map a track mode onto (detection source, association strategy)."""
    if mode not in TRACK_MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {TRACK_MODES}")
    if mode == "full":
        return "render", "reid"
    if mode == "assoc":
        return "oracle", "reid"
    return "oracle", mode


def run_candidates(frame_candidates, init_box, init_embedding, strategy="reid", assoc=None, name=""):
    """Track through precomputed per-frame candidates (frame 0 is the annotation frame)."""
    tracker = Tracker(assoc or AssociationConfig(), mode=strategy)
    t0 = time.perf_counter()
    outputs = [tracker.initialize(init_box, init_embedding)]
    for cands in frame_candidates[1:]:
        outputs.append(tracker.step(cands))
    ms = 1000.0 * (time.perf_counter() - t0) / max(1, len(frame_candidates))
    return TrackRun(name, outputs, list(frame_candidates), ms)


def track_sequence(seq, mode="full", correlation="dc", integration=None, assoc=None,
                   detector=None, source=None):
    """Run one simulated sequence end to end.

    ``source`` overrides where candidates come from (``render`` or ``oracle``);
    by default ``full`` renders feature maps and the other modes use oracle
    detections.
    """
    default_source, strategy = split_mode(mode)
    source = source or default_source
    t0 = time.perf_counter()
    if source == "render":
        det = RenderedDetector(seq, correlation, integration, detector)
        per_frame = [det(f) for f in range(seq.frame_count)]
        init_emb = det.target_embedding
    elif source == "oracle":
        per_frame = [sim.oracle_detect(seq, f) for f in range(seq.frame_count)]
        init_emb = oracle_target_embedding(seq)
    else:
        raise ConfigError(f"unknown detection source {source!r}")
    det_ms = 1000.0 * (time.perf_counter() - t0) / seq.frame_count
    run = run_candidates(per_frame, seq.target_box(0), init_emb, strategy, assoc, seq.config.name)
    run.runtime_ms += det_ms
    return run


def detection_recall(seq, per_frame, iou_threshold=0.5):
    """Fraction of visible objects covered by some candidate at the IoU threshold."""
    hit = total = 0
    for f, cands in enumerate(per_frame):
        for o in np.flatnonzero(seq.visible[f]):
            total += 1
            hit += any(metrics.iou(c.box, seq.boxes[f, o]) >= iou_threshold for c in cands)
    return hit / total if total else float("nan")


def ablate_sequence(seq, correlations=CORRELATIONS, strategies=ASSOCIATION_MODES, integration=None,
                    assoc=None, detector=None, frames=None):
    """All correlation x association cells for one sequence.

    Feature maps are rendered once per frame and shared by every head.
    Returns ``{(correlation, strategy): (TrackRun, recall)}``.
    """
    n = seq.frame_count if frames is None else min(frames, seq.frame_count)
    dets = {c: RenderedDetector(seq, c, integration, detector) for c in correlations}
    per = {c: [] for c in correlations}
    det_ms = {c: 0.0 for c in correlations}
    for f in range(n):
        maps = dets[correlations[0]].render(f)
        for c in correlations:
            t0 = time.perf_counter()
            per[c].append(dets[c].detect_rendered(*maps))
            det_ms[c] += time.perf_counter() - t0
    out = {}
    for c in correlations:
        recall = detection_recall(seq, per[c])
        for s in strategies:
            run = run_candidates(per[c], seq.target_box(0), dets[c].target_embedding, s, assoc,
                                 seq.config.name)
            run.runtime_ms += 1000.0 * det_ms[c] / n
            out[(c, s)] = (run, recall)
    return out


def truncate(seq, frames):
    """The first ``frames`` frames of a sequence."""
    if frames is None or frames >= seq.frame_count:
        return seq
    cfg = sim.ScenarioConfig.from_dict({**seq.config.to_dict(), "frame_count": frames,
                                        "disappearance_intervals": [
                                            [a, min(b, frames - 1)]
                                            for a, b in seq.config.disappearance_intervals if a < frames]})
    return sim.SyntheticSequence(cfg, seq.boxes[:frames].copy(), seq.visible[:frames].copy(),
                                 seq.latents)


def summarize_ablation(cells, seqs):
    """Pool per-sequence cells into one row per (correlation, association)."""
    by_name = {s.config.name: s for s in seqs}
    grouped = {}
    for per_seq in cells:
        for key, (run, recall) in per_seq.items():
            grouped.setdefault(key, []).append((run, recall))
    rows = []
    for (c, s), items in grouped.items():
        results = [r.result(by_name[r.name]) for r, _ in items]
        auc, p20 = metrics.ope_curves(results)
        rows.append({
            "correlation": c, "association": s,
            "success": auc, "precision": p20,
            "id_switches": sum(r.identity_switches(by_name[r.name]) for r, _ in items),
            "detection_recall": float(np.mean([rc for _, rc in items])),
            "runtime_ms_per_frame": float(np.mean([r.runtime_ms for r, _ in items])),
        })
    order = {c: i for i, c in enumerate(CORRELATIONS)}
    sorder = {s: i for i, s in enumerate(ASSOCIATION_MODES)}
    rows.sort(key=lambda r: (order.get(r["correlation"], 9), sorder.get(r["association"], 9)))
    return rows
