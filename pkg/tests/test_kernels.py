import itertools

import numpy as np
import pytest

from dctrack import _purepy, kernels
from conftest import brute_conv

try:
    from dctrack import _core
except ImportError:  # extension not built
    _core = None

BACKENDS = [pytest.param(_purepy, id="python")]
BACKENDS.append(pytest.param(_core, id="cython",
                             marks=pytest.mark.skipif(_core is None, reason="extension not built")))


@pytest.mark.parametrize("mod", BACKENDS)
def test_conv2d_matches_loop(mod, rng):
    for k in (1, 3, 5):
        data = rng.normal(size=(2, 6, 5))
        w = rng.normal(size=(3, 2, k, k))
        b = rng.normal(size=3)
        np.testing.assert_allclose(mod.conv2d(data, w, b), brute_conv(data, w, b), atol=1e-12)


@pytest.mark.parametrize("mod", BACKENDS)
def test_conv2d_rectangular_kernel(mod, rng):
    data = rng.normal(size=(1, 7, 7))
    w = rng.normal(size=(1, 1, 3, 5))
    np.testing.assert_allclose(mod.conv2d(data, w, np.zeros(1)), brute_conv(data, w, np.zeros(1)),
                               atol=1e-12)


@pytest.mark.parametrize("mod", BACKENDS)
def test_roi_align_linear_field(mod):
    # value of cell i is i + 0.5 in pixel units, so bilinear sampling is exact
    xs = np.arange(10) + 0.5
    data = np.broadcast_to(xs, (10, 10))[None].copy()
    out = mod.roi_align(data, 2.0, 0.0, 6.0, 4.0, 2, 2)
    np.testing.assert_allclose(out[0], [[3.0, 5.0], [3.0, 5.0]], atol=1e-9)


@pytest.mark.parametrize("mod", BACKENDS)
def test_roi_align_outside_reads_zero(mod):
    data = np.ones((1, 4, 4))
    out = mod.roi_align(data, 10.0, 10.0, 12.0, 12.0, 1, 1)
    assert out[0, 0, 0] == 0.0


@pytest.mark.parametrize("mod", BACKENDS)
def test_nms_suppresses_overlaps(mod):
    boxes = np.array([[0, 0, 10, 10], [1, 1, 11, 11], [20, 20, 30, 30], [0, 0, 10, 10.5]], float)
    scores = np.array([0.9, 0.8, 0.7, 0.95])
    keep = mod.nms(boxes, scores, 0.5, 5)
    assert list(keep) == [3, 2]
    assert list(mod.nms(boxes, scores, 0.5, 1)) == [3]


def _brute_min(cost):
    n, m = cost.shape
    if n <= m:
        return min(sum(cost[i, p[i]] for i in range(n)) for p in itertools.permutations(range(m), n))
    return _brute_min(cost.T)


@pytest.mark.parametrize("mod", BACKENDS)
def test_lsap_matches_permutation_search(mod, rng):
    for _ in range(200):
        n, m = rng.integers(1, 6, size=2)
        cost = rng.integers(0, 10, size=(n, m)).astype(float)
        rows, cols = mod.lsap(cost)
        assert len(rows) == min(n, m)
        assert len(set(cols.tolist())) == len(cols)
        assert cost[rows, cols].sum() == _brute_min(cost)


@pytest.mark.parametrize("mod", BACKENDS)
def test_lsap_infeasible(mod):
    cost = np.array([[np.inf, np.inf], [1.0, 2.0]])
    with pytest.raises(ValueError):
        mod.lsap(cost)


def test_lsap_respects_forbidden_entries(rng):
    cost = np.array([[1.0, np.inf], [np.inf, 5.0]])
    rows, cols = kernels.lsap(cost)
    assert list(cols) == [0, 1]


@pytest.mark.skipif(_core is None, reason="extension not built")
def test_backends_agree(rng):
    data = rng.normal(size=(4, 9, 11))
    w = rng.normal(size=(2, 4, 3, 3))
    b = rng.normal(size=2)
    np.testing.assert_allclose(_core.conv2d(data, w, b), _purepy.conv2d(data, w, b), atol=1e-12)
    for _ in range(50):
        x1, y1 = rng.uniform(-2, 8, size=2)
        x2, y2 = x1 + rng.uniform(0.5, 6), y1 + rng.uniform(0.5, 6)
        np.testing.assert_allclose(_core.roi_align(data, x1, y1, x2, y2, 3, 2),
                                   _purepy.roi_align(data, x1, y1, x2, y2, 3, 2), atol=1e-12)
    boxes = np.sort(rng.uniform(0, 50, size=(30, 4)).reshape(30, 2, 2), axis=1).transpose(0, 2, 1).reshape(30, 4)
    scores = rng.random(30)
    assert list(_core.nms(boxes, scores, 0.3, 10)) == list(_purepy.nms(boxes, scores, 0.3, 10))
    cost = rng.random((6, 9))
    assert cost[_core.lsap(cost)].sum() == pytest.approx(cost[_purepy.lsap(cost)].sum(), abs=1e-12)


def test_backend_reported():
    assert kernels.BACKEND in ("cython", "python")
    assert set(kernels.backends()) >= {"python"}


def test_env_var_forces_fallback():
    import os
    import subprocess
    import sys
    env = {**os.environ, "DCTRACK_PURE_PYTHON": "1"}
    out = subprocess.run([sys.executable, "-c", "import dctrack; print(dctrack.BACKEND)"],
                         capture_output=True, text=True, env=env, check=True)
    assert out.stdout.strip() == "python"


def test_pipeline_identical_under_fallback():
    import os
    import subprocess
    import sys
    code = ("from dctrack import pipeline, sim\n"
            "s = pipeline.truncate(sim.generate_sequence(sim.load_scenario('s07')), 40)\n"
            "r = pipeline.track_sequence(s, 'full')\n"
            "print([o.to_record()['target_id'] for o in r.outputs])\n"
            "print([round(float(v), 6) for o in r.outputs if o.present for v in o.box])")
    runs = []
    for flag in ("0", "1"):
        env = {**os.environ, "DCTRACK_PURE_PYTHON": flag}
        runs.append(subprocess.run([sys.executable, "-c", code], capture_output=True, text=True,
                                   env=env, check=True).stdout)
    assert runs[0] == runs[1]
