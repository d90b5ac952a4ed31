import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dctrack import losses as L
from dctrack.errors import ConfigError, NumericalWarning


def test_focal_hand_values():
    assert L.focal_loss(0.5, True) == pytest.approx(0.25 * 0.25 * math.log(2), abs=1e-12)
    assert L.focal_loss(0.5, False) == pytest.approx(0.75 * 0.25 * math.log(2), abs=1e-12)
    assert L.focal_loss(0.5, True) == pytest.approx(0.043322, abs=1e-6)
    assert L.focal_loss(0.5, False) == pytest.approx(0.129966, abs=1e-6)


def test_focal_perfect_prediction_is_zero():
    with pytest.warns(NumericalWarning):
        assert L.focal_loss(1.0, True) == pytest.approx(0.0, abs=1e-20)
    with pytest.warns(NumericalWarning):
        assert L.focal_loss(0.0, False) == pytest.approx(0.0, abs=1e-20)


def test_focal_sums_over_locations():
    p = np.array([[0.2, 0.7], [0.5, 0.9]])
    s = np.array([[1, 0], [0, 1]])
    parts = [L.focal_loss(p[i, j], s[i, j]) for i in range(2) for j in range(2)]
    assert L.focal_loss(p, s) == pytest.approx(sum(parts), abs=1e-15)


def test_iou_loss_values():
    assert L.iou_loss([[3, 4, 5, 6]], [[3, 4, 5, 6]]) == 0.0
    # boxes (0,0,2,2) and (1,1,3,3) seen from location (1,1)
    assert L.iou_loss([[1, 1, 1, 1]], [[0, 0, 2, 2]]) == pytest.approx(math.log(7), abs=1e-12)


def test_iou_loss_ignores_negatives(rng):
    pred = rng.uniform(1, 10, size=(5, 4))
    target = rng.uniform(1, 10, size=(5, 4))
    sigma = np.array([1, 0, 1, 0, 0], bool)
    base = L.iou_loss(pred, target, sigma)
    pred2 = pred.copy()
    pred2[~sigma] = rng.uniform(1, 50, size=(3, 4))
    assert L.iou_loss(pred2, target, sigma) == base
    _, g = L.iou_loss_grad(pred, target, sigma)
    assert np.all(g[~sigma] == 0)


def test_iou_loss_zero_area_clamped():
    with pytest.warns(NumericalWarning):
        v = L.iou_loss([[0, 0, 0, 0]], [[1, 1, 1, 1]])
    assert v == pytest.approx(-math.log(1e-12))


def test_centerness_bce_values(rng):
    assert L.centerness_bce(0.5, 0.5) == pytest.approx(math.log(2), abs=1e-12)
    for t in rng.uniform(0.05, 0.95, 10):
        _, g = L.centerness_bce_grad(t, t)
        assert abs(g) < 1e-12
        entropy = -(t * math.log(t) + (1 - t) * math.log(1 - t))
        assert L.centerness_bce(t, t) == pytest.approx(entropy)
    assert L.centerness_bce(np.array([0.3, 0.8]), np.array([0.5, 0.1]), np.array([0, 0])) == 0.0


def test_detection_loss():
    terms = {m: {n: 0.0 for n in L.HEADS} for m in L.LEVELS}
    zero = L.LossWeights({(m, n): 0.0 for m in L.LEVELS for n in L.HEADS})
    terms[4]["reg"] = 2.5
    assert L.detection_loss(terms, zero) == 0.0
    assert L.detection_loss(terms) == 2.5
    del terms[5]
    with pytest.raises(ConfigError):
        L.detection_loss(terms)


def test_detection_loss_direct_sum(rng):
    terms = {m: {n: rng.random() for n in L.HEADS} for m in L.LEVELS}
    lam = {(m, n): rng.random() for m in L.LEVELS for n in L.HEADS}
    acc = 0.0
    for m in (3, 4, 5):
        for n in ("cls", "reg", "ctr"):
            acc += lam[(m, n)] * terms[m][n]
    assert L.detection_loss(terms, L.LossWeights(lam)) == pytest.approx(acc, abs=1e-12)


def test_loss_weights_validation_and_dict():
    with pytest.raises(ConfigError):
        L.LossWeights({(3, "cls"): -1.0})
    with pytest.raises(ConfigError):
        L.LossWeights({(6, "cls"): 1.0})
    w = L.LossWeights.from_dict({"lambda": {"P4": {"reg": 2.0}}, "task_log_vars": [0.1, 0.2]})
    assert w.get(4, "reg") == 2.0 and w.get(3, "cls") == 1.0
    assert L.LossWeights.from_dict(w.to_dict()) == w


def test_cross_query_loss(rng):
    assert L.cross_query_loss([4.2]) == 4.2
    assert L.cross_query_loss([1, 3]) == 2
    v = rng.random(5)
    assert L.cross_query_loss(v) == pytest.approx(v.sum() / 5, abs=1e-15)
    assert L.cross_query_loss(v[::-1]) == pytest.approx(L.cross_query_loss(v), abs=1e-15)
    with pytest.raises(ValueError):
        L.cross_query_loss([])


def test_reid_softmax_uniform_and_limit():
    b = L.ReidBatch(np.zeros((3, 8)), [0, 1, 2], np.ones((4, 8)))
    assert L.reid_softmax_loss(b) == pytest.approx(3 * math.log(4))
    e = np.zeros((1, 2))
    e[0, 0] = 1e3
    b = L.ReidBatch(e, [0], np.eye(2))
    assert L.reid_softmax_loss(b) < 1e-12


def test_reid_softmax_reference(rng):
    E = rng.normal(size=(3, 128))
    W = rng.normal(size=(4, 128)) * 0.1
    lab = np.array([2, 0, 3])
    ref = 0.0
    for m in range(3):
        logits = W @ E[m]
        ex = np.exp(logits)
        ref -= math.log(ex[lab[m]] / ex.sum())
    assert L.reid_softmax_loss(L.ReidBatch(E, lab, W)) == pytest.approx(ref, abs=1e-12)


def test_reid_batch_validation():
    with pytest.raises(ValueError):
        L.ReidBatch(np.zeros((2, 4)), [0, 5], np.zeros((3, 4)))
    with pytest.raises(ValueError):
        L.ReidBatch(np.zeros((2, 4)), [0, 0], np.zeros((1, 4)))


def test_balanced_total(rng):
    assert L.balanced_total(2.0, 4.0, (0, 0)) == 3.0
    assert L.balanced_total(0.0, 0.0, (0, 0)) == 0.0
    d, r, s1, s2 = rng.random(4)
    expected = 0.5 * (math.exp(-s1) * d + math.exp(-s2) * r + s1 + s2)
    assert L.balanced_total(d, r, (s1, s2)) == pytest.approx(expected, abs=1e-15)


def test_grad_check_quadratic():
    f = lambda x: (float(np.sum(x ** 2 + 3 * x)), 2 * x + 3)
    assert L.grad_check(f, np.array([0.3, -1.2, 2.0])) <= 1e-8


def test_grad_check_detects_wrong_gradient():
    f = lambda x: (float(np.sum(x ** 2)), 3 * x)
    assert L.grad_check(f, np.array([1.0, 2.0])) > 0.1


def test_focal_gradient_at_p_03():
    z = np.array([math.log(0.3 / 0.7)])
    for s in (True, False):
        assert L.grad_check(lambda v: L.focal_loss_grad(v, np.array([s])), z, 1e-6) <= 1e-4


@settings(max_examples=100, deadline=None)
@given(p=st.floats(1e-3, 1 - 1e-3), t=st.floats(0, 1), s=st.booleans())
def test_losses_non_negative(p, t, s):
    assert L.focal_loss(p, s) >= 0
    assert L.centerness_bce(p, t) >= 0
