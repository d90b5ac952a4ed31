"""Command-line entry point: ``simulate``, ``track``, ``eval`` and ``ablate``.

Exit codes: 0 success, 1 input error, 2 configuration error.
"""
import argparse
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import config as cfgmod
from . import io, metrics, pipeline, sim
from .errors import ConfigError, GenerationError, InputError, StateError

log = logging.getLogger("dctrack")

EXIT_OK, EXIT_INPUT, EXIT_CONFIG = 0, 1, 2


def _parse_k_list(text):
    try:
        ks = [int(t) for t in str(text).split(",") if t.strip()]
    except ValueError:
        raise ConfigError(f"--topk expects integers, got {text!r}") from None
    if not ks or min(ks) < 1:
        raise ConfigError("--topk values must be positive")
    return ks


def _scenario_refs(refs):
    if not refs:
        return []
    out = []
    for r in refs:
        out.extend(sim.FIXTURE_NAMES if r in ("all", "suite") else [r])
    return out


def _load_sequence(ref, seed):
    scfg = sim.load_scenario(ref)
    if seed is not None:
        scfg = sim.ScenarioConfig.from_dict({**scfg.to_dict(), "seed": int(seed)})
    return sim.generate_sequence(scfg)


def _out_dir(path, default):
    out = Path(path or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write_sequence_files(out, seq):
    t = seq.target
    io.write_groundtruth(out / "groundtruth.txt", seq.boxes[:, t], seq.visible[:, t])
    io.write_visible(out / "visible.txt", seq.visible[:, t])
    io.write_objects(out / "objects.csv", seq)


# --- simulate ------------------------------------------------------------------

def cmd_simulate(args, cfg):
    refs = _scenario_refs(args.scenario) or ["s01"]
    base = _out_dir(cfg.out, "sim_out")
    for ref in refs:
        seq = _load_sequence(ref, cfg.seed)
        out = base if len(refs) == 1 else _out_dir(base / (seq.config.name or Path(ref).stem), None)
        (out / "scenario.json").write_text(json.dumps(seq.config.to_dict(), indent=1) + "\n")
        _write_sequence_files(out, seq)
        dets = [sim.oracle_detect(seq, f, clutter=args.clutter) for f in range(seq.frame_count)]
        io.write_detections(out / "dets.csv", out / "emb.csv", dets)
        log.info("wrote %s (%d frames, %d objects)", out, seq.frame_count, seq.object_count)
    return EXIT_OK


# --- track ---------------------------------------------------------------------

def _track_one(job):
    ref, cfg = job
    seq = _load_sequence(ref, cfg.seed)
    run = pipeline.track_sequence(seq, cfg.mode, cfg.correlation, cfg.integration,
                                  cfg.association, cfg.detector)
    return ref, seq, run


def _emit_track(out, seq, run, cfg):
    meta = {"scenario": seq.config.name, "mode": cfg.mode, "correlation": cfg.correlation.value,
            "runtime_ms_per_frame": run.runtime_ms}
    io.write_results(out / "results.csv", out / "results.json", run.outputs, meta)
    io.write_candidates(out / "candidates.csv", run.candidates)
    _write_sequence_files(out, seq)
    sw = run.identity_switches(seq)
    log.info("%s: %d frames, %d identity switches, %.2f ms/frame",
             seq.config.name or "sequence", seq.frame_count, sw, run.runtime_ms)
    return sw


def _track_files(args, cfg, out):
    if cfg.mode == "full":
        raise ConfigError("--mode full needs a --scenario; detection files support assoc/reid/top1/pc")
    if not args.dets or not args.gt:
        raise InputError("file-based tracking needs --dets and --gt")
    gt, visible = io.read_groundtruth(args.gt, args.visible)
    per_frame = io.read_detections(args.dets, args.emb, frame_count=len(gt))
    if gt[0] is None or not visible[0]:
        raise InputError("the first frame must carry the target annotation")
    init_emb = None
    if per_frame[0]:
        best = max(per_frame[0], key=lambda c: metrics.iou(c.box, gt[0]))
        if metrics.iou(best.box, gt[0]) > 0 and best.embedding.size:
            init_emb = best.embedding
    if init_emb is None and cfg.mode in ("assoc", "reid"):
        log.warning("no first-frame detection overlaps the annotation; re-acquisition disabled")
    _, strategy = pipeline.split_mode(cfg.mode)
    run = pipeline.run_candidates(per_frame, gt[0], init_emb, strategy, cfg.association,
                                  Path(args.dets).stem)
    io.write_results(out / "results.csv", out / "results.json", run.outputs,
                     {"source": str(args.dets), "mode": cfg.mode})
    io.write_candidates(out / "candidates.csv", per_frame)
    log.info("tracked %d frames from %s", len(per_frame), args.dets)
    return EXIT_OK


def cmd_track(args, cfg):
    out = _out_dir(cfg.out, "track_out")
    refs = _scenario_refs(args.scenario)
    if not refs:
        return _track_files(args, cfg, out)
    jobs = [(r, cfg) for r in refs]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            done = list(pool.map(_track_one, jobs))
    else:
        done = [_track_one(j) for j in jobs]
    # single writer, in input order
    for ref, seq, run in done:
        target = out if len(refs) == 1 else _out_dir(out / (seq.config.name or Path(ref).stem), None)
        _emit_track(target, seq, run, cfg)
    return EXIT_OK


# --- eval ----------------------------------------------------------------------

def cmd_eval(args, cfg):
    out = _out_dir(cfg.out, "eval_out")
    report = {k: None for k in ("success_auc", "precision_20", "maxgm", "tpr", "tnr",
                                "f_score", "pr", "re")}
    if args.results:
        if not args.gt:
            raise InputError("eval --results needs --gt")
        gt, visible = io.read_groundtruth(args.gt, args.visible)
        boxes, conf = io.read_results(args.results)
        if len(boxes) != len(gt):
            raise InputError(f"results have {len(boxes)} frames, ground truth has {len(gt)}")
        res = metrics.SequenceResult(boxes, conf, gt, visible)
        auc, p20, curves = metrics.ope_curves(res, return_curves=True)
        tpr, tnr = metrics.tpr_tnr(res, cfg.metrics.tpr_iou)
        (f, pr, re), fcurve = metrics.vot_lt_fscore(res, return_curves=True)
        report.update(success_auc=auc, precision_20=p20, tpr=tpr, tnr=tnr, f_score=f, pr=pr, re=re)
        io.write_curve(out / "success.csv", curves["success"])
        io.write_curve(out / "precision.csv", curves["precision"])
        io.write_curve(out / "fscore.csv", fcurve, ("threshold", "pr", "re", "f_score"))
        if args.objects:
            obj_boxes, obj_vis = io.read_objects(args.objects, len(gt))
            report["id_switches"] = metrics.identity_switches(boxes, obj_boxes, obj_vis)
        if args.candidates:
            cands = io.read_candidates(args.candidates, len(gt))
            ks = sorted(set(cfg.metrics.topk))
            rows = [(k, metrics.topk_upper_bound(cands, gt, k, visible)) for k in ks]
            report["topk"] = {str(k): v for k, v in rows}
            io.write_curve(out / "topk.csv", rows, ("k", "success_auc"))
    if args.tpr is not None:
        report["tpr"] = args.tpr
    if args.tnr is not None:
        report["tnr"] = args.tnr
    if report["tpr"] is not None and report["tnr"] is not None:
        try:
            report["maxgm"] = metrics.max_gm(report["tpr"], report["tnr"])
        except ValueError as exc:
            raise InputError(str(exc)) from None
    if not args.results and args.tpr is None and args.tnr is None:
        raise InputError("eval needs --results/--gt or --tpr/--tnr")
    (out / "report.json").write_text(json.dumps(report, indent=1) + "\n")
    print(json.dumps(report))
    return EXIT_OK


# --- ablate --------------------------------------------------------------------

def _ablate_one(job):
    ref, cfg, frames = job
    seq = pipeline.truncate(_load_sequence(ref, cfg.seed), frames)
    cells = pipeline.ablate_sequence(seq, integration=cfg.integration, assoc=cfg.association,
                                     detector=cfg.detector)
    return seq, cells


def cmd_ablate(args, cfg):
    out = _out_dir(cfg.out, "ablate_out")
    refs = _scenario_refs(args.scenario) or list(sim.FIXTURE_NAMES)
    jobs = [(r, cfg, args.frames) for r in refs]
    t0 = time.perf_counter()
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            done = list(pool.map(_ablate_one, jobs))
    else:
        done = [_ablate_one(j) for j in jobs]
    seqs = [s for s, _ in done]
    rows = pipeline.summarize_ablation([c for _, c in done], seqs)
    io.write_table(out / "ablation.csv", rows)
    for r in rows:
        log.info("%-3s %-5s success=%.4f precision=%.4f switches=%d recall=%.4f %.2f ms/frame",
                 r["correlation"], r["association"], r["success"], r["precision"],
                 r["id_switches"], r["detection_recall"], r["runtime_ms_per_frame"])
    log.info("ablation over %d sequences took %.1f s", len(seqs), time.perf_counter() - t0)
    return EXIT_OK


# --- entry ---------------------------------------------------------------------

def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=int, help="override scenario seed")
    common.add_argument("--scenario", action="append",
                        help="fixture name (s01..s10), scenario JSON/dir, or 'all'; repeatable")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="dctrack", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", parents=[common], help="generate a scenario and its text files")
    s.add_argument("--clutter", type=int, default=0, help="low-score false alarms per frame")

    t = sub.add_parser("track", parents=[common], help="track a scenario or detection files")
    t.add_argument("--mode", choices=pipeline.TRACK_MODES)
    t.add_argument("--correlation", choices=pipeline.CORRELATIONS)
    t.add_argument("--integration", help="integrated head layers, e.g. 1+6")
    t.add_argument("--topk", type=int, help="candidates kept per frame")
    t.add_argument("--dets", help="MOT-style detection CSV")
    t.add_argument("--emb", help="embedding sidecar CSV")
    t.add_argument("--gt", help="groundtruth.txt with the first-frame annotation")
    t.add_argument("--visible", help="visible.txt")
    t.add_argument("--jobs", type=int, default=1)

    e = sub.add_parser("eval", parents=[common], help="score results against ground truth")
    e.add_argument("--results")
    e.add_argument("--gt")
    e.add_argument("--visible")
    e.add_argument("--candidates", help="candidates.csv for the top-K bound")
    e.add_argument("--objects", help="objects.csv for identity switches")
    e.add_argument("--topk", help="comma-separated K values")
    e.add_argument("--tpr", type=float)
    e.add_argument("--tnr", type=float)

    a = sub.add_parser("ablate", parents=[common], help="correlation x association grid")
    a.add_argument("--frames", type=int, help="truncate every sequence to this many frames")
    a.add_argument("--jobs", type=int, default=1)
    return p


def _overrides(args):
    o = {"seed": args.seed, "out": args.out}
    if args.command == "track":
        o.update(mode=args.mode, correlation=args.correlation, integration=args.integration,
                 topk_detector=args.topk)
    if args.command == "eval" and args.topk:
        o["topk_metrics"] = _parse_k_list(args.topk)
    return o


COMMANDS = {"simulate": cmd_simulate, "track": cmd_track, "eval": cmd_eval, "ablate": cmd_ablate}


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        cfg = cfgmod.load(args.config, _overrides(args))
        if getattr(args, "jobs", 1) < 1:
            raise ConfigError("--jobs must be at least 1")
        if getattr(args, "frames", None) is not None and args.frames < 2:
            raise ConfigError("--frames must be at least 2")
        return COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        log.error("config error: %s", exc)
        return EXIT_CONFIG
    except (InputError, GenerationError, StateError, OSError) as exc:
        log.error("input error: %s", exc)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
