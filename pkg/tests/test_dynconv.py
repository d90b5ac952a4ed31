import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dctrack.dethead import DetectionHead
from dctrack.dynconv import (ChannelPlan, Controller, CorrelationMethod, DynKernelSet,
                             IntegrationConfig, apply_correlation, diagonal_controller,
                             generate_kernels, param_count, template_crop)
from dctrack.errors import ConfigError, ShapeError
from dctrack.featmap import FeatureLayout, FeatureMap, global_avg_pool


def _manual_count(config, plan):
    total = 0
    for u in config.cls_layers:
        s = plan.spec("cls", u)
        total += s.in_channels * s.out_channels * s.kernel_w * s.kernel_h + s.out_channels
    for v in config.reg_layers:
        s = plan.spec("reg", v)
        total += s.in_channels * s.out_channels * s.kernel_w * s.kernel_h + s.out_channels
    return total


def test_param_count_single_layer():
    plan = ChannelPlan.reference()
    cfg = IntegrationConfig(frozenset({6}), frozenset())
    assert param_count(cfg, plan) == 32 * 2 + 2
    cfg = IntegrationConfig(frozenset(), frozenset({6}))
    assert param_count(cfg, plan) == 32 * 4 + 4


def test_param_count_default_integration():
    plan = ChannelPlan.reference()
    expected = (256 * 256 + 256) + (32 * 2 + 2) + (256 * 256 + 256) + (32 * 4 + 4)
    assert param_count(IntegrationConfig(), plan) == expected


def test_empty_integration_yields_no_kernels(rng):
    cfg = IntegrationConfig.parse("none")
    plan = ChannelPlan.stacked(5, 4, 3)
    fm = FeatureMap(rng.normal(size=(5, 8, 8)), 8)
    ctrl = Controller(np.zeros((0, 5)), np.zeros(0), cfg, plan)
    ks = generate_kernels(fm, (8, 8, 40, 40), cfg, ctrl)
    assert ks.total_params == 0 and ks.layers == {}


@settings(max_examples=50, deadline=None)
@given(cls=st.sets(st.integers(1, 6)), reg=st.sets(st.integers(1, 6)),
       c_in=st.integers(1, 6), tower=st.integers(1, 5), enc=st.integers(1, 4))
def test_generated_vector_length_equals_count(cls, reg, c_in, tower, enc):
    cfg = IntegrationConfig(frozenset(cls), frozenset(reg))
    plan = ChannelPlan.stacked(c_in, tower, enc)
    assert param_count(cfg, plan) == _manual_count(cfg, plan)
    ctrl = Controller.random(cfg, plan, c_in, seed=1)
    fm = FeatureMap(np.random.default_rng(0).normal(size=(c_in, 6, 6)), 8)
    ks = generate_kernels(fm, (4, 4, 30, 30), cfg, ctrl)
    assert ks.total_params == param_count(cfg, plan)
    assert sum(w + b for _, w, b in ks.segment_sizes()) == ks.total_params


def test_integration_config_validation():
    with pytest.raises(ConfigError):
        IntegrationConfig(frozenset({7}), frozenset())
    with pytest.raises(ConfigError):
        IntegrationConfig.parse("1+x")
    cfg = IntegrationConfig.parse("1+6")
    assert cfg.layers() == [("cls", 1), ("cls", 6), ("reg", 1), ("reg", 6)]
    assert IntegrationConfig.from_dict(cfg.to_dict()) == cfg


def test_correlation_method_parse():
    assert CorrelationMethod.parse("DC") is CorrelationMethod.DC
    with pytest.raises(ConfigError):
        CorrelationMethod.parse("xx")


def test_kernel_set_round_trip(tmp_path, rng):
    cfg = IntegrationConfig.parse("2+5")
    plan = ChannelPlan.stacked(3, 4, 2)
    ks = DynKernelSet.from_vector(cfg, plan, rng.normal(size=param_count(cfg, plan)))
    back = DynKernelSet.from_json(ks.to_json())
    np.testing.assert_array_equal(back.vector, ks.vector)
    ks.save_npz(tmp_path / "k.npz")
    np.testing.assert_array_equal(DynKernelSet.load_npz(tmp_path / "k.npz").vector, ks.vector)
    with pytest.raises(ShapeError):
        DynKernelSet.from_vector(cfg, plan, np.zeros(3))


def test_kernel_slicing_order(rng):
    cfg = IntegrationConfig(frozenset({1}), frozenset({6}))
    plan = ChannelPlan.stacked(2, 3, 2)
    vec = np.arange(param_count(cfg, plan), dtype=float)
    ks = DynKernelSet.from_vector(cfg, plan, vec)
    np.testing.assert_array_equal(ks.layer("cls", 1).weights.ravel(), vec[:6])
    np.testing.assert_array_equal(ks.layer("cls", 1).bias, vec[6:9])
    np.testing.assert_array_equal(ks.layer("reg", 6).bias, vec[-4:])


def test_controller_mismatch_rejected(rng):
    plan = ChannelPlan.stacked(3, 4, 2)
    ctrl = Controller.random(IntegrationConfig.parse("1"), plan, 3)
    fm = FeatureMap(rng.normal(size=(3, 6, 6)), 8)
    with pytest.raises(ConfigError):
        generate_kernels(fm, (0, 0, 20, 20), IntegrationConfig.parse("6"), ctrl)


def test_controller_save_load(tmp_path):
    plan = ChannelPlan.stacked(3, 4, 2)
    ctrl = Controller.random(IntegrationConfig.parse("1+6"), plan, 3, seed=4)
    ctrl.save(tmp_path / "c.npz")
    back = Controller.load(tmp_path / "c.npz")
    np.testing.assert_array_equal(back.weight, ctrl.weight)
    assert back.plan == plan


def _random_case(rng, channels=6):
    search = FeatureMap(rng.normal(size=(channels, 9, 9)), 8)
    template = FeatureMap(rng.normal(size=(channels, 12, 12)), 8)
    x1, y1 = rng.uniform(0, 40, size=2)
    box = (x1, y1, x1 + rng.uniform(16, 50), y1 + rng.uniform(16, 50))
    return search, template, box


def test_dc_subsumes_hp_and_pointwise_dw(rng):
    for _ in range(100):
        search, template, box = _random_case(rng)
        ctrl = diagonal_controller(search.channels)
        ks = generate_kernels(template, box, ctrl.config, ctrl)
        dc = apply_correlation(search, None, "dc", ks)
        vec = global_avg_pool(template_crop(template, box))
        hp = apply_correlation(search, vec, "hp")
        dw = apply_correlation(search, FeatureMap(vec[:, None, None], 8), "dw")
        np.testing.assert_allclose(dc.data, hp.data, atol=1e-9, rtol=0)
        np.testing.assert_allclose(dc.data, dw.data, atol=1e-9, rtol=0)


def test_cc_equals_sum_of_dw(rng):
    search, template, box = _random_case(rng)
    crop = template_crop(template, box, 3)
    cc = apply_correlation(search, crop, "cc")
    dw = apply_correlation(search, crop, "dw")
    np.testing.assert_allclose(cc.data[0], dw.data.sum(axis=0), atol=1e-12)


def test_apply_correlation_errors(rng):
    search, template, box = _random_case(rng)
    with pytest.raises(ShapeError):
        apply_correlation(search, np.ones(3), "hp")
    with pytest.raises(ShapeError):
        apply_correlation(search, None, "dc")
    with pytest.raises(ShapeError):
        apply_correlation(search, np.ones((6, 2, 2)), "cc")


def test_constructed_dc_head_matches_hp_head():
    from dctrack import sim
    seq = sim.generate_sequence(sim.load_scenario("s02"))
    lay = FeatureLayout()
    levels, _ = sim.render_feature_maps(seq, 0, lay)
    box = seq.target_box(0)
    dc = DetectionHead.from_template(lay, "dc", levels[0], box)
    hp = DetectionHead.from_template(lay, "hp", levels[0], box)
    for f in (0, 50, 120):
        levels, _ = sim.render_feature_maps(seq, f, lay)
        for fm in levels:
            for a, b in zip(dc.forward(fm), hp.forward(fm)):
                np.testing.assert_allclose(a, b, atol=1e-9)
