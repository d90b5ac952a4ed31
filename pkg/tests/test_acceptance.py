"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""
import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from dctrack import metrics, pipeline, sim
from dctrack.assoc import hungarian
from dctrack.dethead import assign_samples
from dctrack.dynconv import (ChannelPlan, Controller, IntegrationConfig, apply_correlation,
                             diagonal_controller, generate_kernels, param_count, template_crop)
from dctrack.featmap import FeatureMap, global_avg_pool
from dctrack.losses import (ReidBatch, centerness_bce_grad, focal_loss_grad, grad_check, iou_loss_grad,
                            reid_softmax_grad)
from oracles import assignment_brute_force, brute_positives


def report(number, title, ok, detail):
    line = f"criterion {number:>2} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
    print(line)
    ACCEPTANCE_LINES.append(line)
    assert ok, line


@pytest.fixture(scope="module")
def suite():
    return [sim.generate_sequence(c) for c in sim.fixture_suite()]


@pytest.fixture(scope="module")
def full_runs(suite):
    return [pipeline.track_sequence(s, "full") for s in suite]


def test_c01_maxgm_rows():
    rows = [(0.395, 0.0, 0.314, 1e-3), (0.208, 0.895, 0.431, 1e-3), (0.686, 0.694, 0.688, 2e-3)]
    got = [metrics.max_gm(t, n) for t, n, _, _ in rows]
    ok = all(abs(g - want) <= tol for g, (_, _, want, tol) in zip(got, rows))
    report(1, "MaxGM arithmetic", ok, ", ".join(f"{g:.4f}" for g in got))


def test_c02_parameter_vector_length():
    rng = np.random.default_rng(2)
    bad = 0
    for _ in range(50):
        cls = frozenset(int(v) for v in np.flatnonzero(rng.random(6) < 0.5) + 1)
        reg = frozenset(int(v) for v in np.flatnonzero(rng.random(6) < 0.5) + 1)
        cfg = IntegrationConfig(cls, reg)
        c_in, tower, enc = (int(v) for v in rng.integers(1, 7, size=3))
        plan = ChannelPlan.stacked(c_in, tower, enc)
        ctrl = Controller.random(cfg, plan, c_in, seed=int(rng.integers(1 << 30)))
        fm = FeatureMap(rng.normal(size=(c_in, 6, 6)), 8)
        ks = generate_kernels(fm, (4, 4, 30, 30), cfg, ctrl)
        bad += ks.total_params != param_count(cfg, plan)
    report(2, "parameter bookkeeping", bad == 0, f"{50 - bad}/50 configs exact")


def test_c03_gradient_suite():
    rng = np.random.default_rng(3)
    worst = {"focal": 0.0, "iou": 0.0, "centerness": 0.0, "reid": 0.0}
    for _ in range(100):
        sigma = rng.random(6) < 0.4
        z = rng.uniform(-4, 4, 6)
        worst["focal"] = max(worst["focal"], grad_check(lambda v: focal_loss_grad(v, sigma), z))

        target = rng.uniform(2, 30, 4)
        pred = target + rng.uniform(-1.5, 1.5, 4)
        # keep every side away from the kink where pred == target
        pred = np.where(np.abs(pred - target) < 0.05, target + 0.3, pred)
        worst["iou"] = max(worst["iou"], grad_check(lambda v: iou_loss_grad(v, target), pred))

        t = rng.random(5)
        p = rng.uniform(0.05, 0.95, 5)
        worst["centerness"] = max(worst["centerness"],
                                  grad_check(lambda v: centerness_bce_grad(v, t), p))

        E = rng.normal(size=(4, 5))
        W = rng.normal(size=(3, 5))
        y = rng.integers(0, 3, 4)
        x = np.concatenate([E.ravel(), W.ravel()])

        def reid(v):
            loss, (dE, dW) = reid_softmax_grad(ReidBatch(v[:20].reshape(4, 5), y, v[20:].reshape(3, 5)))
            return loss, np.concatenate([dE.ravel(), dW.ravel()])

        worst["reid"] = max(worst["reid"], grad_check(reid, x))
    ok = max(worst.values()) <= 1e-4
    report(3, "gradient suite", ok, ", ".join(f"{k} {v:.1e}" for k, v in worst.items()))


def test_c04_correlation_subsumption():
    rng = np.random.default_rng(4)
    err = 0.0
    for _ in range(100):
        c = int(rng.integers(1, 9))
        search = FeatureMap(rng.normal(size=(c, 9, 9)), 8)
        template = FeatureMap(rng.normal(size=(c, 12, 12)), 8)
        x1, y1 = rng.uniform(0, 40, size=2)
        box = (x1, y1, x1 + rng.uniform(16, 50), y1 + rng.uniform(16, 50))
        ctrl = diagonal_controller(c)
        dc = apply_correlation(search, None, "dc", generate_kernels(template, box, ctrl.config, ctrl))
        vec = global_avg_pool(template_crop(template, box))
        hp = apply_correlation(search, vec, "hp")
        dw = apply_correlation(search, FeatureMap(vec[:, None, None], 8), "dw")
        err = max(err, np.abs(dc.data - hp.data).max(), np.abs(dc.data - dw.data).max())
    report(4, "correlation subsumption", err <= 1e-9, f"max abs diff {err:.1e}")


def test_c05_hungarian_optimality():
    rng = np.random.default_rng(5)
    bad = 0
    for _ in range(1000):
        n, m = (int(v) for v in rng.integers(1, 7, size=2))
        cost = rng.uniform(0, 10, size=(n, m))
        if rng.random() < 0.3:
            cost = np.round(cost)  # ties
        a = hungarian(cost)
        bad += a.total_cost != assignment_brute_force(cost) or len(a.matches) != min(n, m)
    report(5, "Hungarian optimality", bad == 0, f"{1000 - bad}/1000 matrices exact")


def test_c06_sample_assignment():
    rng = np.random.default_rng(6)
    bad = 0
    for _ in range(100):
        h, w = (int(v) for v in rng.integers(1, 33, size=2))
        stride = int(rng.choice([4, 8, 16, 32]))
        x1, y1 = rng.uniform(-20, max(h, w) * stride, size=2)
        gt = (x1, y1, x1 + rng.uniform(1, 300), y1 + rng.uniform(1, 300))
        bad += set(assign_samples((h, w), stride, gt).positives()) != brute_positives((h, w), stride, gt)
    report(6, "sample assignment", bad == 0, f"{100 - bad}/100 boxes exact")


def test_c07_distractor_property(suite):
    eligible = [s for s in suite
                if s.config.embedding_noise_sigma <= 0.1 and s.config.appearance_separation >= 0.6]
    switches = {m: [] for m in ("reid", "pc", "top1")}
    reid_results = []
    for s in eligible:
        for m in switches:
            run = pipeline.track_sequence(s, m)
            switches[m].append(run.identity_switches(s))
            if m == "reid":
                reid_results.append(run.result(s))
    auc = metrics.ope_curves(reid_results)[0]
    crossing = [i for i, s in enumerate(eligible) if sim.is_crossing(s.config)]
    totals = {m: sum(v) for m, v in switches.items()}
    ok = (totals["reid"] == 0 and auc >= 0.95 and crossing
          and all(switches["top1"][i] >= 1 for i in crossing)
          and totals["reid"] <= totals["pc"] <= totals["top1"])
    report(7, "distractor property", ok,
           f"{len(eligible)} scenarios, switches reid/pc/top1 {totals['reid']}/{totals['pc']}/{totals['top1']}, "
           f"top1 on crossing {[switches['top1'][i] for i in crossing]}, reid AUC {auc:.3f}")


def test_c08_disappearance(suite):
    agree = total = 0
    for s in suite:
        if not s.config.disappearance_intervals:
            continue
        per_frame = [sim.oracle_detect(s, f, box_noise=0.0, embedding_noise=0.0) for f in range(s.frame_count)]
        run = pipeline.run_candidates(per_frame, s.target_box(0), pipeline.oracle_target_embedding(s))
        present = np.array([o.present for o in run.outputs])
        agree += int(np.sum(present == s.visible[:, s.target]))
        total += s.frame_count
    rate = agree / total
    report(8, "disappearance handling", total > 0 and rate >= 0.99, f"{agree}/{total} frames ({rate:.2%})")


def test_c09_topk_monotone(suite, full_runs):
    ok = True
    worst_gap = 0.0
    for s, run in zip(suite, full_runs):
        lists = [[(c.box, c.cls_score) for c in cands] for cands in run.candidates]
        gts = list(s.boxes[:, s.target])
        vis = list(s.visible[:, s.target])
        vals = [metrics.topk_upper_bound(lists, gts, k, vis) for k in (1, 2, 3, 5, 15, 50)]
        ok &= all(b >= a for a, b in zip(vals, vals[1:]))
        top1 = [max(c, key=lambda bs: bs[1])[0] if c else None for c in lists]
        plain = metrics.ope_curves(metrics.SequenceResult(top1, [1.0] * len(top1), gts, vis))[0]
        worst_gap = max(worst_gap, abs(vals[0] - plain))
    ok &= worst_gap == 0.0
    report(9, "top-K monotonicity", ok, f"monotone on {len(suite)} fixtures, |K=1 - OPE| max {worst_gap}")


def test_c10_end_to_end(suite, full_runs):
    hit = total = 0
    for s, run in zip(suite, full_runs):
        for f, cands in enumerate(run.candidates):
            for o in np.flatnonzero(s.visible[f]):
                total += 1
                hit += any(metrics.iou(c.box, s.boxes[f, o]) >= 0.5 for c in cands)
    recall = hit / total
    again = [pipeline.track_sequence(s, "full") for s in suite]
    identical = all(
        [o.to_record() for o in a.outputs] == [o.to_record() for o in b.outputs]
        and all(np.array_equal(x.box, y.box) and x.final_score == y.final_score
                for ca, cb in zip(a.candidates, b.candidates) for x, y in zip(ca, cb))
        for a, b in zip(full_runs, again))
    report(10, "end-to-end pipeline", recall >= 0.95 and identical,
           f"recall {hit}/{total} ({recall:.2%}), reruns bit-identical: {identical}")
