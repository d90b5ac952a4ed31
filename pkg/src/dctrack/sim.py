"""Deterministic synthetic long-term sequences.

Object 0 is always the target. Boxes are ``(x1, y1, x2, y2)`` pixels and
frames are 0-based in memory (files written by ``dctrack.io`` are 1-based).
"""
import json
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from .dethead import EMBED_STRIDE, HEAD_STRIDES, Candidate, location_grid
from .errors import ConfigError, GenerationError, InputError
from .featmap import FeatureLayout, FeatureMap

EMBED_DIM = 128
MOTION_MODELS = ("linear", "crossing", "random-walk")
_PATTERN_SEED = 20210521

# stream tags for per-purpose generators
_TAG_WORLD, _TAG_ORACLE, _TAG_EMBED = 1, 2, 3


@dataclass
class ScenarioConfig:
    image_size: int = 256
    frame_count: int = 200
    distractor_count: int = 0
    appearance_separation: float = 0.6
    embedding_noise_sigma: float = 0.1
    box_noise_sigma: float = 0.5
    disappearance_intervals: list = field(default_factory=list)
    motion_model: str = "linear"
    seed: int = 0
    object_size: tuple = (40.0, 48.0)
    speed: float = 1.5
    name: str = ""

    def __post_init__(self):
        self.disappearance_intervals = [tuple(int(v) for v in iv) for iv in self.disappearance_intervals]
        self.object_size = tuple(float(v) for v in self.object_size)
        self.validate()

    def validate(self):
        if self.image_size < 32:
            raise ConfigError("image_size must be >= 32")
        if self.frame_count < 1:
            raise ConfigError("frame_count must be >= 1")
        if self.distractor_count < 0:
            raise ConfigError("distractor_count must be >= 0")
        if not 0.0 < self.appearance_separation <= 2.0:
            raise ConfigError("appearance_separation must be in (0, 2]")
        if self.embedding_noise_sigma < 0 or self.box_noise_sigma < 0:
            raise ConfigError("noise sigmas must be >= 0")
        if self.motion_model not in MOTION_MODELS:
            raise ConfigError(f"motion_model must be one of {MOTION_MODELS}")
        for start, end in self.disappearance_intervals:
            if not 0 <= start <= end < self.frame_count:
                raise ConfigError(f"disappearance interval ({start}, {end}) outside [0, {self.frame_count})")
        lo, hi = self.object_size
        if not 0 < lo <= hi < self.image_size / 2:
            raise ConfigError("object_size must satisfy 0 < min <= max < image_size / 2")

    def to_dict(self):
        d = asdict(self)
        d["disappearance_intervals"] = [list(iv) for iv in self.disappearance_intervals]
        d["object_size"] = list(self.object_size)
        return d

    @classmethod
    def from_dict(cls, d):
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        try:
            return cls(**known)
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"bad scenario field: {exc}") from None


@dataclass
class SyntheticSequence:
    config: ScenarioConfig
    boxes: np.ndarray  # frames x objects x 4
    visible: np.ndarray  # frames x objects
    latents: np.ndarray  # objects x EMBED_DIM, unit rows

    target = 0

    @property
    def frame_count(self):
        return self.boxes.shape[0]

    @property
    def object_count(self):
        return self.boxes.shape[1]

    @property
    def image_size(self):
        return (self.config.image_size, self.config.image_size)

    def target_box(self, frame):
        return self.boxes[frame, self.target]

    def target_visible(self, frame):
        return bool(self.visible[frame, self.target])


def _rng(seed, frame, tag):
    return np.random.default_rng([int(seed), int(frame), int(tag)])


def sample_latents(count, separation, rng, dim=EMBED_DIM, max_tries=10000):
    """Unit vectors with pairwise cosine distance >= ``separation``."""
    out = []
    tries = 0
    while len(out) < count:
        tries += 1
        if tries > max_tries:
            raise GenerationError(
                f"could not place {count} latents with separation {separation} in {dim}-D"
            )
        v = rng.standard_normal(dim)
        v /= np.linalg.norm(v)
        if all(1.0 - float(v @ u) >= separation for u in out):
            out.append(v)
    return np.array(out).reshape(count, dim)


def _bounce(pos, vel, lo, hi):
    for k in range(2):
        if pos[k] < lo[k]:
            pos[k] = 2 * lo[k] - pos[k]
            vel[k] = -vel[k]
        elif pos[k] > hi[k]:
            pos[k] = 2 * hi[k] - pos[k]
            vel[k] = -vel[k]
        pos[k] = min(max(pos[k], lo[k]), hi[k])


def generate_sequence(config):
    rng = _rng(config.seed, 0, _TAG_WORLD)
    T = config.frame_count
    N = 1 + config.distractor_count
    S = float(config.image_size)
    latents = sample_latents(N, config.appearance_separation, rng)
    lo_size, hi_size = config.object_size
    sizes = rng.uniform(lo_size, hi_size, size=(N, 2))
    centers = np.zeros((T, N, 2))
    margin = 2.0

    crossing_pair = config.motion_model == "crossing" and N >= 2
    if crossing_pair:
        # the pair shares a size so their boxes overlap heavily when crossing
        sizes[1] = sizes[0] * rng.uniform(0.95, 1.05, size=2)
    for o in range(N):
        w, h = sizes[o]
        lo = np.array([w / 2 + margin, h / 2 + margin])
        hi = np.array([S - w / 2 - margin, S - h / 2 - margin])
        if crossing_pair and o < 2:
            # target left->right, first distractor right->left on the same row;
            # they coincide at mid-sequence
            y = S / 2
            t = np.arange(T) / max(T - 1, 1)
            start, end = (lo[0], hi[0]) if o == 0 else (hi[0], lo[0])
            centers[:, o, 0] = start + (end - start) * t
            centers[:, o, 1] = y
            continue
        pos = rng.uniform(lo, hi)
        angle = rng.uniform(0, 2 * np.pi)
        vel = config.speed * np.array([np.cos(angle), np.sin(angle)])
        for f in range(T):
            centers[f, o] = pos
            if config.motion_model == "random-walk":
                vel = vel + rng.normal(0.0, 0.3 * config.speed, 2)
                sp = np.linalg.norm(vel)
                if sp > 2 * config.speed:
                    vel *= 2 * config.speed / sp
            pos = pos + vel
            _bounce(pos, vel, lo, hi)
    half = sizes[None, :, :] / 2
    boxes = np.concatenate([centers - half, centers + half], axis=2)
    boxes = np.clip(boxes, 0.0, S)
    visible = np.ones((T, N), dtype=bool)
    for start, end in config.disappearance_intervals:
        visible[start:end + 1, 0] = False
    return SyntheticSequence(config, boxes, visible, latents)


_PATTERNS = {}


def appearance_patterns(latents, dim):
    """Fixed random projection of latents to ``dim`` unit patterns."""
    if dim not in _PATTERNS:
        proj = np.random.default_rng(_PATTERN_SEED).standard_normal((dim, latents.shape[1]))
        _PATTERNS[dim] = proj / np.sqrt(dim)
    p = latents @ _PATTERNS[dim].T
    return p / np.linalg.norm(p, axis=1, keepdims=True)


def _render_level(boxes, patterns, stride, size, layout):
    H = W = int(np.ceil(size / stride))
    xs, ys = location_grid(H, W, stride)
    data = np.zeros((layout.channels, H, W))
    if len(boxes) == 0:
        return FeatureMap(data, stride)
    X, Y = np.meshgrid(xs, ys)
    bumps = []
    for b in boxes:
        cx, cy = 0.5 * (b[0] + b[2]), 0.5 * (b[1] + b[3])
        sx = max((b[2] - b[0]) * layout.bump_sigma_fraction, 1e-6)
        sy = max((b[3] - b[1]) * layout.bump_sigma_fraction, 1e-6)
        bumps.append(np.exp(-0.5 * (((X - cx) / sx) ** 2 + ((Y - cy) / sy) ** 2)))
    bumps = np.array(bumps)
    owner = np.argmax(bumps, axis=0)
    data[layout.objectness] = bumps.max(axis=0)
    data[layout.appearance] = np.einsum("oa,ohw->ahw", patterns, bumps)
    ob = np.asarray(boxes)[owner]  # H x W x 4
    sides = np.stack([X - ob[..., 0], Y - ob[..., 1], ob[..., 2] - X, ob[..., 3] - Y]) / stride
    data[layout.box_sides] = sides
    return FeatureMap(data, stride)


def render_feature_maps(seq, frame, layout=None, strides=HEAD_STRIDES):
    """Per-level maps plus the stride-4 embedding map for one frame."""
    layout = layout if layout is not None else FeatureLayout()
    if not 0 <= frame < seq.frame_count:
        raise IndexError(f"frame {frame} outside [0, {seq.frame_count})")
    vis = np.flatnonzero(seq.visible[frame])
    boxes = seq.boxes[frame, vis]
    patterns = appearance_patterns(seq.latents[vis], layout.appearance_dim) if len(vis) else np.zeros((0, layout.appearance_dim))
    size = seq.config.image_size
    levels = [_render_level(boxes, patterns, s, size, layout) for s in strides]

    E = int(np.ceil(size / EMBED_STRIDE))
    emb = np.zeros((EMBED_DIM, E, E))
    if len(vis):
        xs, ys = location_grid(E, E, EMBED_STRIDE)
        X, Y = np.meshgrid(xs, ys)
        best = np.full((E, E), -np.inf)
        owner = np.full((E, E), -1)
        for k, b in enumerate(boxes):
            cx, cy = 0.5 * (b[0] + b[2]), 0.5 * (b[1] + b[3])
            w, h = b[2] - b[0], b[3] - b[1]
            core = (np.abs(X - cx) <= w / 4) & (np.abs(Y - cy) <= h / 4)
            closeness = -(((X - cx) / w) ** 2 + ((Y - cy) / h) ** 2)
            take = core & (closeness > best)
            owner[take] = k
            best[take] = closeness[take]
        jj, ii = np.nonzero(owner >= 0)
        vals = seq.latents[vis[owner[jj, ii]]].T
        sigma = seq.config.embedding_noise_sigma / np.sqrt(EMBED_DIM)
        if sigma > 0:
            rng = _rng(seq.config.seed, frame, _TAG_EMBED)
            vals = vals + rng.normal(0.0, sigma, size=vals.shape)
        emb[:, jj, ii] = vals
    return levels, FeatureMap(emb, EMBED_STRIDE)


def _noisy_unit(v, sigma, rng):
    if sigma > 0:
        v = v + rng.normal(0.0, sigma / np.sqrt(v.size), v.size)
    return v / np.linalg.norm(v)


def oracle_detect(seq, frame, box_noise=None, embedding_noise=None, clutter=0, score_range=(0.9, 1.0)):
    """One candidate per visible object, plus ``clutter`` low-score false alarms.

    Embedding noise has total expected norm ``embedding_noise`` (per-component
    std ``sigma / sqrt(128)``). Candidate ``identity`` holds the object index,
    ``-1`` for clutter.
    """
    if not 0 <= frame < seq.frame_count:
        raise IndexError(f"frame {frame} outside [0, {seq.frame_count})")
    cfg = seq.config
    box_noise = cfg.box_noise_sigma if box_noise is None else box_noise
    embedding_noise = cfg.embedding_noise_sigma if embedding_noise is None else embedding_noise
    rng = _rng(cfg.seed, frame, _TAG_ORACLE)
    S = float(cfg.image_size)
    out = []
    for o in np.flatnonzero(seq.visible[frame]):
        box = seq.boxes[frame, o].copy()
        if box_noise > 0:
            box = box + rng.normal(0.0, box_noise, 4)
            box = np.clip(box, 0.0, S)
            if box[2] - box[0] < 1.0:
                box[2] = min(box[0] + 1.0, S)
            if box[3] - box[1] < 1.0:
                box[3] = min(box[1] + 1.0, S)
        emb = _noisy_unit(seq.latents[o], embedding_noise, rng)
        score = float(rng.uniform(*score_range))
        out.append(Candidate(box, score, 1.0, score, emb, identity=int(o)))
    for _ in range(int(clutter)):
        wh = rng.uniform(*cfg.object_size, size=2)
        xy = rng.uniform(0.0, S - wh)
        emb = rng.standard_normal(EMBED_DIM)
        score = float(rng.uniform(0.1, 0.4))
        out.append(Candidate(np.concatenate([xy, xy + wh]), score, 1.0, score,
                             emb / np.linalg.norm(emb), identity=-1))
    return out


# --- fixture suite -------------------------------------------------------------

FIXTURE_NAMES = tuple(f"s{i:02d}" for i in range(1, 11))


def load_scenario(ref):
    """Load a scenario by fixture name (``s07``), fixture path (``fixtures/s07``) or JSON path."""
    ref = str(ref)
    path = Path(ref)
    if path.is_dir() and (path / "scenario.json").exists():
        path = path / "scenario.json"
    if path.suffix == ".json" and path.is_file():
        try:
            data = json.loads(path.read_text())
        except ValueError as exc:
            raise InputError(f"corrupt scenario file {path}: {exc}") from None
        if not isinstance(data, dict):
            raise InputError(f"scenario file {path} must hold a JSON object")
        return ScenarioConfig.from_dict(data)
    name = path.name.removesuffix(".json")
    if name not in FIXTURE_NAMES:
        raise InputError(f"unknown scenario {ref!r}; fixtures are {', '.join(FIXTURE_NAMES)}")
    text = resources.files("dctrack").joinpath("fixtures").joinpath(f"{name}.json").read_text()
    return ScenarioConfig.from_dict(json.loads(text))


def fixture_suite():
    return [load_scenario(n) for n in FIXTURE_NAMES]


def is_crossing(config):
    return config.motion_model == "crossing" and config.distractor_count >= 1
