import pytest

from dctrack import config
from dctrack.dynconv import CorrelationMethod
from dctrack.errors import ConfigError, InputError

SAMPLE = """
seed = 9
mode = "assoc"
correlation = "hp"
integration = "1+6"

[association]
appearance_weight = 0.7
max_lost_frames = 10

[detector]
top_k = 7

[loss.lambda.P4]
reg = 2.0

[metrics]
topk = [1, 3]
"""


def test_defaults():
    cfg = config.load()
    assert cfg.mode == "full" and cfg.correlation is CorrelationMethod.DC
    assert cfg.association.iou_gate == 0.3 and cfg.detector.top_k == 5
    assert cfg.metrics.topk == config.DEFAULT_TOPK


def test_file_and_flag_precedence(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text(SAMPLE)
    cfg = config.load(p)
    assert cfg.seed == 9 and cfg.mode == "assoc" and cfg.correlation is CorrelationMethod.HP
    assert cfg.association.appearance_weight == 0.7 and cfg.association.max_lost_frames == 10
    assert cfg.detector.top_k == 7 and cfg.loss.get(4, "reg") == 2.0
    assert cfg.metrics.topk == (1, 3)
    cfg = config.load(p, {"mode": "top1", "seed": 3, "topk_detector": 2, "out": "x"})
    assert cfg.mode == "top1" and cfg.seed == 3 and cfg.detector.top_k == 2 and cfg.out == "x"
    assert config.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


@pytest.mark.parametrize("text", [
    'mode = "warp"',
    'correlation = "xx"',
    'bogus = 1',
    '[association]\nappearance_weight = 2.0',
    '[association]\nnope = 1',
    '[detector]\ntop_k = 0',
    '[loss.lambda.P3]\ncls = -1.0',
    '[metrics]\ntopk = [0]',
    'integration = "1+9"',
    'seed = -4',
    'mode = ',
])
def test_invalid_configs(tmp_path, text):
    p = tmp_path / "c.toml"
    p.write_text(text)
    with pytest.raises(ConfigError):
        config.load(p)


def test_missing_config_file(tmp_path):
    with pytest.raises(InputError):
        config.load(tmp_path / "nope.toml")
