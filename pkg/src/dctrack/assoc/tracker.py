"""Tracklet bookkeeping, two-stage association and the single-target tracker."""
import math
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np

from ..errors import ConfigError, StateError
from .kalman import KalmanFilter, xyah_to_xyxy, xyxy_to_xyah
from .matching import embed_distance, embedding_distance_matrix, hungarian, iou_matrix

MODES = ("reid", "top1", "pc")
PC_POOL = 5


class TrackStatus(str, Enum):
    ACTIVE = "active"
    LOST = "lost"
    REMOVED = "removed"


@dataclass
class AssociationConfig:
    appearance_weight: float = 0.5
    iou_gate: float = 0.3
    embedding_momentum: float = 0.9
    max_lost_frames: int = 30
    reid_recover_threshold: float = 0.4
    # fused-cost gate for the appearance+motion stage
    match_gate: float = 0.7
    # pairs whose embeddings are farther apart never match on appearance
    embedding_gate: float = 0.5
    spawn_score: float = 0.5

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("appearance_weight", "iou_gate", "embedding_momentum", "spawn_score"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ConfigError(f"association.{name} must be in [0, 1], got {v}")
        for name in ("reid_recover_threshold", "embedding_gate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 2.0:
                raise ConfigError(f"association.{name} must be a cosine distance in [0, 2], got {v}")
        if not self.match_gate > 0:
            raise ConfigError(f"association.match_gate must be positive, got {self.match_gate}")
        if int(self.max_lost_frames) != self.max_lost_frames or self.max_lost_frames < 0:
            raise ConfigError(f"association.max_lost_frames must be a count, got {self.max_lost_frames}")

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, d):
        known = set(cls.__dataclass_fields__)
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown association keys: {sorted(extra)}")
        return cls(**d)


def _unit(v):
    v = np.asarray(v, dtype=np.float64)
    n = np.linalg.norm(v)
    return v / n if n > 0 else v.copy()


@dataclass
class Tracklet:
    id: int
    kalman: object
    smoothed_embedding: np.ndarray
    status: TrackStatus = TrackStatus.ACTIVE
    frames_since_seen: int = 0
    is_target: bool = False
    history: list = field(default_factory=list)

    @property
    def box(self):
        return xyah_to_xyxy(self.kalman.mean[:4])

    def absorb(self, candidate, frame, kf, momentum):
        self.kalman = kf.update(self.kalman, xyxy_to_xyah(candidate.box))
        emb = np.asarray(candidate.embedding, dtype=np.float64)
        if emb.size and np.linalg.norm(emb) > 0:
            if np.linalg.norm(self.smoothed_embedding) > 0:
                mixed = momentum * self.smoothed_embedding + (1 - momentum) * _unit(emb)
            else:
                mixed = emb
            self.smoothed_embedding = _unit(mixed)
        self.status = TrackStatus.ACTIVE
        self.frames_since_seen = 0
        self.history.append((frame, np.asarray(candidate.box, dtype=np.float64).copy(),
                             float(candidate.final_score)))

    def miss(self, max_lost):
        self.frames_since_seen += 1
        if self.frames_since_seen > max_lost:
            self.status = TrackStatus.REMOVED
        else:
            self.status = TrackStatus.LOST


@dataclass
class AssociationResult:
    matches: list  # (tracklet, candidate index)
    new_tracklets: list
    lost_updates: list
    unmatched_candidates: list


class IdAllocator:
    def __init__(self, start=0):
        self.next = start

    def __call__(self):
        i = self.next
        self.next += 1
        return i


def _stage_one_cost(tracks, candidates, config):
    boxes_t = np.array([t.box for t in tracks]).reshape(-1, 4)
    boxes_c = np.array([c.box for c in candidates]).reshape(-1, 4)
    emb_t = [t.smoothed_embedding for t in tracks]
    emb_c = [np.asarray(c.embedding, dtype=np.float64) for c in candidates]
    dim = max([len(e) for e in emb_t + emb_c] + [1])
    pad = lambda es: np.array([e if len(e) == dim else np.zeros(dim) for e in es]).reshape(len(es), dim)
    d_emb = embedding_distance_matrix(pad(emb_t), pad(emb_c))
    w = config.appearance_weight
    cost = w * d_emb + (1 - w) * (1 - iou_matrix(boxes_t, boxes_c))
    # anything beyond the gate is forbidden by hungarian
    cost[d_emb > config.embedding_gate] = config.match_gate + 1.0
    return cost


def associate(tracklets, candidates, config, frame=0, kf=None, new_id=None):
    """Advance every live tracklet one frame and link it to this frame's candidates.

    Stage one matches on appearance and predicted position; stage two lets
    tracklets that were active last frame pick up leftover candidates by IoU
    alone. High-scoring leftovers start new tracklets.
    """
    kf = kf or KalmanFilter()
    new_id = new_id or IdAllocator(max([t.id for t in tracklets] + [-1]) + 1)
    live = [t for t in tracklets if t.status != TrackStatus.REMOVED]
    for t in live:
        t.kalman = kf.predict(t.kalman)

    matches = []
    free_c = list(range(len(candidates)))
    if live and candidates:
        a = hungarian(_stage_one_cost(live, candidates, config), config.match_gate)
        matches += [(live[r], c) for r, c in a.matches]
        free_t = [live[r] for r in a.unmatched_rows]
        free_c = a.unmatched_cols
    else:
        free_t = list(live)

    recent = [t for t in free_t if t.status == TrackStatus.ACTIVE]
    if recent and free_c:
        boxes_t = np.array([t.box for t in recent])
        boxes_c = np.array([candidates[c].box for c in free_c])
        a = hungarian(1.0 - iou_matrix(boxes_t, boxes_c), 1.0 - config.iou_gate)
        matches += [(recent[r], free_c[c]) for r, c in a.matches]
        claimed = {id(recent[r]) for r, _ in a.matches}
        free_t = [t for t in free_t if id(t) not in claimed]
        free_c = [free_c[c] for c in a.unmatched_cols]

    for t, c in matches:
        t.absorb(candidates[c], frame, kf, config.embedding_momentum)
    for t in free_t:
        t.miss(config.max_lost_frames)

    new_tracklets = []
    for c in free_c:
        cand = candidates[c]
        if cand.final_score >= config.spawn_score:
            new_tracklets.append(spawn(cand, frame, kf, new_id()))
    return AssociationResult(matches, new_tracklets, free_t, free_c)


def spawn(candidate, frame, kf, track_id):
    t = Tracklet(track_id, kf.initiate(xyxy_to_xyah(candidate.box)),
                 _unit(np.asarray(candidate.embedding, dtype=np.float64)))
    t.history.append((frame, np.asarray(candidate.box, dtype=np.float64).copy(),
                      float(candidate.final_score)))
    return t


@dataclass
class TargetOutput:
    frame: int
    present: bool
    box: object  # xyxy array or None
    confidence: float
    target_id: int
    active_count: int

    def to_record(self):
        if self.box is None:
            x = y = w = h = 0.0
        else:
            x, y = float(self.box[0]), float(self.box[1])
            w, h = float(self.box[2] - self.box[0]), float(self.box[3] - self.box[1])
        return {"frame": self.frame, "present": int(self.present), "x": x, "y": y, "w": w, "h": h,
                "confidence": float(self.confidence), "target_id": int(self.target_id),
                "active_count": int(self.active_count)}


class Tracker:
    """Single-target tracker that keeps every similar object as a tracklet.

    ``mode`` selects how the target is picked each frame: ``reid`` runs the
    full association, ``top1`` takes the highest classification score and
    ``pc`` takes the top-5 candidate closest to the previous output.
    """

    def __init__(self, config=None, mode="reid", kf=None):
        if mode not in MODES:
            raise ConfigError(f"unknown association mode {mode!r}; expected one of {MODES}")
        self.config = config or AssociationConfig()
        self.mode = mode
        self.kf = kf or KalmanFilter()
        self.tracklets = []
        self.target = None
        self.target_embedding = None
        self.frame = None
        self.last_box = None
        self._ids = IdAllocator()

    @property
    def initialized(self):
        return self.frame is not None

    def initialize(self, box, embedding=None, frame=0):
        box = np.asarray(box, dtype=np.float64)
        if not (box[2] > box[0] and box[3] > box[1]):
            raise ValueError(f"initial box must have positive size, got {box.tolist()}")
        emb = np.zeros(0) if embedding is None else np.asarray(embedding, dtype=np.float64)
        t = Tracklet(self._ids(), self.kf.initiate(xyxy_to_xyah(box)), _unit(emb), is_target=True)
        t.history.append((frame, box.copy(), 1.0))
        self.tracklets = [t]
        self.target = t
        self.target_embedding = _unit(emb) if emb.size and np.linalg.norm(emb) > 0 else None
        self.frame = frame
        self.last_box = box.copy()
        return TargetOutput(frame, True, box.copy(), 1.0, t.id, 1)

    def active_count(self):
        return sum(t.status == TrackStatus.ACTIVE for t in self.tracklets)

    def step(self, candidates):
        if not self.initialized:
            raise StateError("tracker.step called before initialize")
        self.frame += 1
        if self.mode == "top1":
            return self._pick(candidates, lambda c: -c.cls_score)
        if self.mode == "pc":
            pool = sorted(candidates, key=lambda c: -c.cls_score)[:PC_POOL]
            lx, ly = 0.5 * (self.last_box[0] + self.last_box[2]), 0.5 * (self.last_box[1] + self.last_box[3])
            return self._pick(pool, lambda c: math.hypot(c.center[0] - lx, c.center[1] - ly))
        return self._step_reid(candidates)

    def _pick(self, candidates, key):
        if not candidates:
            return TargetOutput(self.frame, False, None, 0.0, self.target.id, 0)
        best = min(candidates, key=key)
        self.last_box = np.asarray(best.box, dtype=np.float64).copy()
        return TargetOutput(self.frame, True, self.last_box.copy(), float(best.final_score),
                            self.target.id, len(candidates))

    def _step_reid(self, candidates):
        cfg = self.config
        res = associate(self.tracklets, candidates, cfg, self.frame, self.kf, self._ids)
        self.tracklets = [t for t in self.tracklets
                          if t.status != TrackStatus.REMOVED or t is self.target]
        self.tracklets += res.new_tracklets

        hit = next((c for t, c in res.matches if t is self.target), None)
        if hit is None and self.target_embedding is not None:
            hit = self._recover(candidates, res)
        if hit is None:
            return TargetOutput(self.frame, False, None, 0.0, self.target.id, self.active_count())
        cand = candidates[hit]
        self.last_box = np.asarray(cand.box, dtype=np.float64).copy()
        return TargetOutput(self.frame, True, self.last_box.copy(), float(cand.final_score),
                            self.target.id, self.active_count())

    def _recover(self, candidates, res):
        best, best_d = None, self.config.reid_recover_threshold
        for c in res.unmatched_candidates:
            emb = np.asarray(candidates[c].embedding, dtype=np.float64)
            if emb.size != self.target_embedding.size or np.linalg.norm(emb) == 0:
                continue
            d = embed_distance(emb, self.target_embedding)
            if d < best_d:
                best, best_d = c, d
        if best is None:
            return None
        owner = next((t for t in res.new_tracklets if t.history[-1][0] == self.frame
                      and np.array_equal(t.history[-1][1], candidates[best].box)), None)
        if owner is None:
            owner = spawn(candidates[best], self.frame, self.kf, self._ids())
            self.tracklets.append(owner)
        old = self.target
        old.is_target = False
        if old.status == TrackStatus.REMOVED:
            self.tracklets.remove(old)
        owner.is_target = True
        self.target = owner
        return best
