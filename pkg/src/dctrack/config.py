"""Engine configuration: one TOML file plus command-line overrides.

Schema (every section optional)::

    seed = 7                      # overrides scenario seeds when set
    mode = "full"                 # full | assoc | reid | top1 | pc
    correlation = "dc"            # cc | dw | hp | dc
    integration = "1+6"           # or a table {cls_layers=[..], reg_layers=[..]}

    [association]                 # see AssociationConfig
    [detector]                    # top_k, nms_iou, score_threshold, pre_nms_top_n
    [loss]                        # lambda.P3.cls = 1.0 ..., task_log_vars = [0, 0]
    [metrics]                     # topk = [1, 2, 3, 5, 15, 50], tpr_iou = 0.5
    [paths]                       # out = "runs/x"
"""
import sys
from dataclasses import dataclass, field
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .assoc import AssociationConfig
from .dynconv import CorrelationMethod, IntegrationConfig
from .errors import ConfigError, InputError
from .losses import LossWeights
from .pipeline import TRACK_MODES, DetectorOptions

DEFAULT_TOPK = (1, 2, 3, 5, 15, 50)
TOP_KEYS = {"seed", "mode", "correlation", "integration", "association", "detector", "loss",
            "metrics", "paths"}


@dataclass
class MetricOptions:
    topk: tuple = DEFAULT_TOPK
    tpr_iou: float = 0.5

    def __post_init__(self):
        self.topk = tuple(int(k) for k in self.topk)
        if not self.topk or min(self.topk) < 1:
            raise ConfigError("metrics.topk must be a non-empty list of positive integers")
        if not 0.0 < self.tpr_iou <= 1.0:
            raise ConfigError(f"metrics.tpr_iou must be in (0, 1], got {self.tpr_iou}")


@dataclass
class EngineConfig:
    seed: object = None
    mode: str = "full"
    correlation: CorrelationMethod = CorrelationMethod.DC
    integration: IntegrationConfig = field(default_factory=IntegrationConfig)
    association: AssociationConfig = field(default_factory=AssociationConfig)
    detector: DetectorOptions = field(default_factory=DetectorOptions)
    loss: LossWeights = field(default_factory=LossWeights)
    metrics: MetricOptions = field(default_factory=MetricOptions)
    out: object = None

    def __post_init__(self):
        if self.mode not in TRACK_MODES:
            raise ConfigError(f"mode must be one of {TRACK_MODES}, got {self.mode!r}")
        self.correlation = CorrelationMethod.parse(self.correlation)
        if self.seed is not None and (int(self.seed) != self.seed or self.seed < 0):
            raise ConfigError(f"seed must be a non-negative integer, got {self.seed!r}")

    def to_dict(self):
        return {
            "seed": self.seed, "mode": self.mode, "correlation": self.correlation.value,
            "integration": self.integration.to_dict(), "association": self.association.to_dict(),
            "detector": vars(self.detector).copy(), "loss": self.loss.to_dict(),
            "metrics": {"topk": list(self.metrics.topk), "tpr_iou": self.metrics.tpr_iou},
            "paths": {"out": None if self.out is None else str(self.out)},
        }


def _section(d, key, cls):
    sub = d.get(key, {})
    if not isinstance(sub, dict):
        raise ConfigError(f"[{key}] must be a table")
    try:
        return cls(**sub)
    except TypeError as exc:
        raise ConfigError(f"[{key}]: {exc}") from None


def from_dict(d):
    unknown = set(d) - TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    integ = d.get("integration")
    if integ is None:
        integration = IntegrationConfig()
    elif isinstance(integ, dict):
        integration = IntegrationConfig.from_dict(integ)
    else:
        integration = IntegrationConfig.parse(integ)
    assoc = d.get("association", {})
    if not isinstance(assoc, dict):
        raise ConfigError("[association] must be a table")
    loss = d.get("loss", {})
    if not isinstance(loss, dict):
        raise ConfigError("[loss] must be a table")
    return EngineConfig(
        seed=d.get("seed"),
        mode=d.get("mode", "full"),
        correlation=d.get("correlation", "dc"),
        integration=integration,
        association=AssociationConfig.from_dict(assoc),
        detector=_section(d, "detector", DetectorOptions),
        loss=LossWeights.from_dict(loss),
        metrics=_section(d, "metrics", MetricOptions),
        out=(d.get("paths") or {}).get("out"),
    )


def load(path=None, overrides=None):
    """Read ``path`` (if any) and apply non-None ``overrides``; flags win."""
    data = {}
    if path is not None:
        path = Path(path)
        if not path.is_file():
            raise InputError(f"config file not found: {path}")
        try:
            data = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key == "out":
            data.setdefault("paths", {})["out"] = str(value)
        elif key == "topk_detector":
            data.setdefault("detector", {})["top_k"] = value
        elif key == "topk_metrics":
            data.setdefault("metrics", {})["topk"] = list(value)
        else:
            data[key] = value
    return from_dict(data)
