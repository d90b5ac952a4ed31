"""Target-conditioned dynamic 1x1 convolutions and template correlation.

A controller turns a template crop into one flat parameter vector. The vector
is cut into per-layer kernels in a fixed order: classification layers in
ascending index, then regression layers in ascending index; inside a layer the
``out x in`` weight block (row-major) comes first, then the ``out`` biases.
"""
import json
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import ConfigError, ShapeError
from .featmap import FeatureMap, KernelSpec, conv, conv1x1, global_avg_pool, roi_align
from . import kernels as _kernels

BRANCHES = ("cls", "reg")
HEAD_DEPTH = 6
TEMPLATE_CROP = 7


class CorrelationMethod(str, Enum):
    CC = "cc"
    DW = "dw"
    HP = "hp"
    DC = "dc"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ConfigError(f"unknown correlation method {value!r}; expected cc|dw|hp|dc") from None


@dataclass(frozen=True)
class IntegrationConfig:
    """Which head layers (1-based) carry generated kernels."""

    cls_layers: frozenset = frozenset({1, 6})
    reg_layers: frozenset = frozenset({1, 6})
    p: int = HEAD_DEPTH
    q: int = HEAD_DEPTH

    def __post_init__(self):
        object.__setattr__(self, "cls_layers", frozenset(int(u) for u in self.cls_layers))
        object.__setattr__(self, "reg_layers", frozenset(int(v) for v in self.reg_layers))
        if self.p < 1 or self.q < 1:
            raise ConfigError("p and q must be >= 1")
        for u in self.cls_layers:
            if not 1 <= u <= self.p:
                raise ConfigError(f"classification layer {u} outside [1, {self.p}]")
        for v in self.reg_layers:
            if not 1 <= v <= self.q:
                raise ConfigError(f"regression layer {v} outside [1, {self.q}]")

    @classmethod
    def parse(cls, text):
        """Parse the ``"1+6"`` shorthand (same layers in both heads)."""
        text = str(text).strip()
        if text in ("", "none", "0"):
            return cls(frozenset(), frozenset())
        try:
            layers = frozenset(int(t) for t in text.split("+"))
        except ValueError:
            raise ConfigError(f"bad integration spec {text!r}") from None
        return cls(layers, layers)

    def layers(self):
        """Integrated ``(branch, layer)`` pairs in slicing order."""
        return [("cls", u) for u in sorted(self.cls_layers)] + [
            ("reg", v) for v in sorted(self.reg_layers)
        ]

    def to_dict(self):
        return {"cls_layers": sorted(self.cls_layers), "reg_layers": sorted(self.reg_layers),
                "p": self.p, "q": self.q}

    @classmethod
    def from_dict(cls, d):
        return cls(frozenset(d.get("cls_layers", ())), frozenset(d.get("reg_layers", ())),
                   int(d.get("p", HEAD_DEPTH)), int(d.get("q", HEAD_DEPTH)))


class ChannelPlan:
    """Input/output channel counts for every head layer, keyed ``(branch, layer)``."""

    def __init__(self, entries):
        self._entries = {}
        for (branch, layer), (cin, cout) in dict(entries).items():
            if branch not in BRANCHES:
                raise ConfigError(f"unknown branch {branch!r}")
            self._entries[(branch, int(layer))] = KernelSpec(int(cin), int(cout))

    @classmethod
    def stacked(cls, in_channels, tower, encoder, cls_out=2, reg_out=4, depth=HEAD_DEPTH):
        """Four stacked convs, an encoder, a predictor: the reference head shape."""
        entries = {}
        for branch, out in (("cls", cls_out), ("reg", reg_out)):
            widths = [in_channels] + [tower] * (depth - 2) + [encoder, out]
            for layer in range(1, depth + 1):
                entries[(branch, layer)] = (widths[layer - 1], widths[layer])
        return cls(entries)

    @classmethod
    def reference(cls):
        """256 channels in the stacked convs, 32 in the encoder."""
        return cls.stacked(256, 256, 32)

    def spec(self, branch, layer):
        try:
            return self._entries[(branch, int(layer))]
        except KeyError:
            raise ConfigError(f"channel plan has no entry for {branch} layer {layer}") from None

    def items(self):
        return sorted(self._entries.items())

    def to_dict(self):
        return {f"{b}{l}": [s.in_channels, s.out_channels] for (b, l), s in self.items()}

    @classmethod
    def from_dict(cls, d):
        entries = {}
        for key, (cin, cout) in d.items():
            branch, layer = key[:3], int(key[3:])
            entries[(branch, layer)] = (cin, cout)
        return cls(entries)

    def __eq__(self, other):
        return isinstance(other, ChannelPlan) and self._entries == other._entries


def param_count(config, channel_plan):
    """Total generated parameters: sum of ``(C_in*Kw*Kh + 1) * C_out`` over integrated layers."""
    return sum(channel_plan.spec(b, l).param_count for b, l in config.layers())


@dataclass
class DynLayer:
    weights: np.ndarray  # out x in
    bias: np.ndarray
    spec: KernelSpec


@dataclass
class DynKernelSet:
    config: IntegrationConfig
    plan: ChannelPlan
    vector: np.ndarray
    layers: dict = field(default_factory=dict)

    @property
    def total_params(self):
        return int(self.vector.size)

    @classmethod
    def from_vector(cls, config, plan, vector):
        vector = np.asarray(vector, dtype=np.float64).ravel().copy()
        expected = param_count(config, plan)
        if vector.size != expected:
            raise ShapeError(f"parameter vector has {vector.size} values, config needs {expected}")
        vector.setflags(write=False)
        layers = {}
        pos = 0
        for branch, layer in config.layers():
            spec = plan.spec(branch, layer)
            nw = spec.weight_count
            w = vector[pos:pos + nw].reshape(spec.out_channels, spec.in_channels)
            pos += nw
            b = vector[pos:pos + spec.out_channels]
            pos += spec.out_channels
            layers[(branch, layer)] = DynLayer(w, b, spec)
        return cls(config, plan, vector, layers)

    def layer(self, branch, index):
        return self.layers.get((branch, index))

    def segment_sizes(self):
        return [(k, l.weights.size, l.bias.size) for k, l in self.layers.items()]

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "channel_plan": self.plan.to_dict(),
            "params": self.vector.tolist(),
        }

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d):
        return cls.from_vector(IntegrationConfig.from_dict(d["config"]),
                               ChannelPlan.from_dict(d["channel_plan"]), d["params"])

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))

    def save_npz(self, path):
        np.savez(path, params=self.vector,
                 meta=np.frombuffer(json.dumps({"config": self.config.to_dict(),
                                                "channel_plan": self.plan.to_dict()}).encode(),
                                    dtype=np.uint8))

    @classmethod
    def load_npz(cls, path):
        with np.load(path) as z:
            meta = json.loads(bytes(z["meta"]).decode())
            return cls.from_vector(IntegrationConfig.from_dict(meta["config"]),
                                   ChannelPlan.from_dict(meta["channel_plan"]), z["params"])


class Controller:
    """1x1 encoder from template channels to the generated parameter count."""

    def __init__(self, weight, bias, config, plan):
        weight = np.asarray(weight, dtype=np.float64)
        bias = np.asarray(bias, dtype=np.float64).ravel()
        n = param_count(config, plan)
        if weight.ndim != 2 or weight.shape[0] != n or bias.size != n:
            raise ShapeError(f"encoder must be {n} x C_in with {n} biases")
        self.weight = weight
        self.bias = bias
        self.config = config
        self.plan = plan

    @property
    def in_channels(self):
        return self.weight.shape[1]

    @classmethod
    def random(cls, config, plan, in_channels, seed=0, scale=0.05):
        rng = np.random.default_rng(seed)
        n = param_count(config, plan)
        return cls(rng.normal(0.0, scale, (n, in_channels)), rng.normal(0.0, scale, n),
                   config, plan)

    def save(self, path):
        np.savez(path, weight=self.weight, bias=self.bias,
                 meta=np.frombuffer(json.dumps({"config": self.config.to_dict(),
                                                "channel_plan": self.plan.to_dict()}).encode(),
                                    dtype=np.uint8))

    @classmethod
    def load(cls, path):
        with np.load(path) as z:
            meta = json.loads(bytes(z["meta"]).decode())
            return cls(z["weight"], z["bias"], IntegrationConfig.from_dict(meta["config"]),
                       ChannelPlan.from_dict(meta["channel_plan"]))


def generate_kernels(template_map, target_box, config, controller, plan=None):
    """ROI-align a 7x7 crop, encode with 1x1 conv, pool, and slice into kernels."""
    plan = plan if plan is not None else controller.plan
    if config.layers() and (config != controller.config or plan != controller.plan):
        raise ConfigError("controller was built for a different integration config")
    if not config.layers():
        return DynKernelSet.from_vector(config, plan, np.zeros(0))
    crop = roi_align(template_map, target_box, TEMPLATE_CROP, 2)
    encoded = conv1x1(crop, controller.weight, controller.bias)
    return DynKernelSet.from_vector(config, plan, global_avg_pool(encoded))


def template_crop(template_map, target_box, size=TEMPLATE_CROP):
    return roi_align(template_map, target_box, size, 2)


def _as_vector(template_source):
    if isinstance(template_source, FeatureMap):
        return global_avg_pool(template_source)
    return np.asarray(template_source, dtype=np.float64).ravel()


def apply_correlation(search_map, template_source, method, kernels=None, branch="cls"):
    """Fuse template information into ``search_map``.

    CC: template crop slid over the search map, one output channel.
    DW: per-channel correlation with the crop, channels preserved.
    HP: channel-wise product with the pooled template vector.
    DC: the branch's generated 1x1 kernels applied in layer order.
    """
    method = CorrelationMethod.parse(method)
    if method is CorrelationMethod.HP:
        vec = _as_vector(template_source)
        if vec.size != search_map.channels:
            raise ShapeError(f"template vector has {vec.size} channels, map has {search_map.channels}")
        return FeatureMap(search_map.data * vec[:, None, None], search_map.stride)

    if method is CorrelationMethod.DC:
        if kernels is None:
            raise ShapeError("DC correlation needs a generated kernel set")
        out = search_map
        found = False
        for (b, layer) in kernels.config.layers():
            if b != branch:
                continue
            dl = kernels.layers[(b, layer)]
            out = conv(out, dl.weights, dl.bias, dl.spec)
            found = True
        if not found:
            raise ShapeError(f"kernel set has no {branch} layers")
        return out

    if not isinstance(template_source, FeatureMap):
        template_source = np.asarray(template_source, dtype=np.float64)
        if template_source.ndim == 1:
            template_source = template_source[:, None, None]
        template_source = FeatureMap(template_source, search_map.stride)
    t = template_source.data
    if t.shape[0] != search_map.channels:
        raise ShapeError(f"template has {t.shape[0]} channels, map has {search_map.channels}")
    if t.shape[1] % 2 == 0 or t.shape[2] % 2 == 0:
        raise ShapeError("template crop must have odd spatial size")

    if method is CorrelationMethod.CC:
        spec = KernelSpec(t.shape[0], 1, t.shape[2], t.shape[1])
        return conv(search_map, t[None], np.zeros(1), spec)

    # DW: one single-channel correlation per channel
    out = np.empty_like(search_map.data)
    zero = np.zeros(1)
    for c in range(t.shape[0]):
        if t.shape[1] == 1 and t.shape[2] == 1:
            out[c] = search_map.data[c] * t[c, 0, 0]
        else:
            out[c] = _kernels.conv2d(search_map.data[c:c + 1], t[c][None, None], zero)[0]
    return FeatureMap(out, search_map.stride)


def diagonal_controller(channels):
    """Controller for one generated cls layer whose weight is ``diag(pooled template)``.

    With it, DC on a map equals HP with the pooled template vector and a
    depth-wise correlation with a 1x1 template.
    """
    config = IntegrationConfig(frozenset({1}), frozenset())
    plan = ChannelPlan({("cls", 1): (channels, channels)})
    n = param_count(config, plan)
    weight = np.zeros((n, channels))
    weight[np.arange(channels) * channels + np.arange(channels), np.arange(channels)] = 1.0
    return Controller(weight, np.zeros(n), config, plan)
