"""Text formats: per-frame annotations, detections with embedding sidecar, results, curves.

Files count frames from 1; everything in memory counts from 0.
"""
import csv
import json
from pathlib import Path

import numpy as np

from .dethead import Candidate
from .errors import InputError

RESULT_FIELDS = ("frame", "present", "x", "y", "w", "h", "confidence", "target_id", "active_count")
CANDIDATE_FIELDS = ("frame", "rank", "x", "y", "w", "h", "cls_score", "centerness", "final_score")


def _xywh_to_xyxy(x, y, w, h):
    return np.array([x, y, x + w, y + h], dtype=np.float64)


def _rows(path, min_cols, what):
    path = Path(path)
    if not path.is_file():
        raise InputError(f"{what} file not found: {path}")
    out = []
    with path.open(newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), 1):
            row = [c.strip() for c in row]
            if not row or not any(row) or row[0].startswith("#"):
                continue
            if len(row) < min_cols:
                raise InputError(f"{path}:{lineno}: expected at least {min_cols} columns, got {len(row)}")
            try:
                out.append([float(c) for c in row])
            except ValueError:
                if not out and lineno == 1:
                    continue  # header
                raise InputError(f"{path}:{lineno}: non-numeric field") from None
    return out


# --- annotations ---------------------------------------------------------------

def write_groundtruth(path, boxes, visible):
    with Path(path).open("w") as fh:
        for box, v in zip(boxes, visible):
            if v:
                x1, y1, x2, y2 = box
                fh.write(f"{x1:.6f},{y1:.6f},{x2 - x1:.6f},{y2 - y1:.6f}\n")
            else:
                fh.write("0,0,0,0\n")


def write_visible(path, visible):
    Path(path).write_text("".join(f"{int(bool(v))}\n" for v in visible))


def read_groundtruth(path, visible_path=None):
    """Boxes (``xyxy`` or None) and visibility flags.

    Without a visibility file, an all-zero line marks an absent frame.
    """
    rows = _rows(path, 4, "ground-truth")
    if not rows:
        raise InputError(f"ground-truth file is empty: {path}")
    boxes = [None if r[2] <= 0 or r[3] <= 0 else _xywh_to_xyxy(*r[:4]) for r in rows]
    if visible_path is None:
        visible = [b is not None for b in boxes]
    else:
        vis = _rows(visible_path, 1, "visibility")
        if len(vis) != len(rows):
            raise InputError(f"visibility has {len(vis)} lines, ground truth has {len(rows)}")
        visible = [bool(v[0]) for v in vis]
        for f, (b, v) in enumerate(zip(boxes, visible)):
            if v and b is None:
                raise InputError(f"frame {f + 1} marked visible but has an empty box")
    return boxes, visible


def write_objects(path, seq):
    """All objects, MOT ground-truth style: ``frame,id,x,y,w,h,visible``."""
    with Path(path).open("w") as fh:
        for f in range(seq.frame_count):
            for o in range(seq.object_count):
                x1, y1, x2, y2 = seq.boxes[f, o]
                fh.write(f"{f + 1},{o},{x1:.6f},{y1:.6f},{x2 - x1:.6f},{y2 - y1:.6f},"
                         f"{int(seq.visible[f, o])}\n")


def read_objects(path, frame_count):
    rows = _rows(path, 7, "objects")
    n_obj = int(max(r[1] for r in rows)) + 1 if rows else 0
    boxes = np.zeros((frame_count, n_obj, 4))
    visible = np.zeros((frame_count, n_obj), dtype=bool)
    for r in rows:
        f, o = int(r[0]) - 1, int(r[1])
        if not 0 <= f < frame_count:
            raise InputError(f"objects file references frame {f + 1} beyond {frame_count}")
        boxes[f, o] = _xywh_to_xyxy(*r[2:6])
        visible[f, o] = bool(r[6])
    return boxes, visible


# --- detections ----------------------------------------------------------------

def write_detections(det_path, emb_path, per_frame):
    """MOT-style ``frame,id,x,y,w,h,score`` plus ``frame,id,e1..eD``.

    ``id`` numbers the detections within a frame and joins the two files.
    """
    with Path(det_path).open("w") as fd, Path(emb_path).open("w") as fe:
        for f, cands in enumerate(per_frame):
            for k, c in enumerate(cands):
                x, y, w, h = c.xywh
                fd.write(f"{f + 1},{k + 1},{x:.6f},{y:.6f},{w:.6f},{h:.6f},{c.final_score:.6f}\n")
                fe.write(f"{f + 1},{k + 1}," + ",".join(f"{v:.9g}" for v in c.embedding) + "\n")


def read_detections(det_path, emb_path=None, frame_count=None):
    rows = _rows(det_path, 7, "detection")
    embs = {}
    if emb_path is not None:
        for r in _rows(emb_path, 3, "embedding"):
            embs[(int(r[0]), int(r[1]))] = np.asarray(r[2:], dtype=np.float64)
        dims = {len(e) for e in embs.values()}
        if len(dims) > 1:
            raise InputError(f"embedding rows have inconsistent lengths {sorted(dims)}")
    last = max((int(r[0]) for r in rows), default=0)
    n = frame_count if frame_count is not None else last
    if last > n:
        raise InputError(f"detections reference frame {last} but the sequence has {n} frames")
    per_frame = [[] for _ in range(n)]
    for r in rows:
        f, k = int(r[0]), int(r[1])
        if f < 1:
            raise InputError(f"frame numbers start at 1, got {f}")
        if r[4] <= 0 or r[5] <= 0:
            raise InputError(f"detection {k} in frame {f} has non-positive size")
        emb = embs.get((f, k))
        if emb_path is not None and emb is None:
            raise InputError(f"no embedding for detection {k} in frame {f}")
        score = float(r[6])
        per_frame[f - 1].append(Candidate(_xywh_to_xyxy(*r[2:6]), score, 1.0, score,
                                          emb if emb is not None else np.zeros(0)))
    return per_frame


# --- results -------------------------------------------------------------------

def write_results(csv_path, json_path, outputs, meta=None):
    records = [o.to_record() for o in outputs]
    for r in records:
        r["frame"] += 1
    with Path(csv_path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=RESULT_FIELDS, lineterminator="\n")
        w.writeheader()
        for r in records:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
    if json_path is not None:
        Path(json_path).write_text(json.dumps({"meta": meta or {}, "frames": records}, indent=1) + "\n")


def read_results(path):
    """Predicted boxes (None when absent) and confidences, from CSV or JSON."""
    path = Path(path)
    if not path.is_file():
        raise InputError(f"results file not found: {path}")
    if path.suffix == ".json":
        try:
            records = json.loads(path.read_text())["frames"]
        except (ValueError, KeyError, TypeError) as exc:
            raise InputError(f"corrupt results JSON {path}: {exc}") from None
    else:
        with path.open(newline="") as fh:
            records = list(csv.DictReader(fh))
        if records and set(RESULT_FIELDS) - set(records[0]):
            raise InputError(f"results CSV {path} lacks columns {sorted(set(RESULT_FIELDS) - set(records[0]))}")
    boxes, conf = [], []
    try:
        for i, r in enumerate(records):
            if int(r["frame"]) != i + 1:
                raise InputError(f"results frames must be consecutive from 1; row {i + 1} has {r['frame']}")
            present = int(r["present"])
            boxes.append(_xywh_to_xyxy(*(float(r[k]) for k in "xywh")) if present else None)
            conf.append(float(r["confidence"]))
    except (KeyError, ValueError) as exc:
        raise InputError(f"corrupt results row in {path}: {exc}") from None
    return boxes, conf


def write_candidates(path, per_frame):
    with Path(path).open("w") as fh:
        fh.write(",".join(CANDIDATE_FIELDS) + "\n")
        for f, cands in enumerate(per_frame):
            for k, c in enumerate(cands):
                x, y, w, h = c.xywh
                fh.write(f"{f + 1},{k + 1},{x:.6f},{y:.6f},{w:.6f},{h:.6f},"
                         f"{c.cls_score:.9g},{c.centerness:.9g},{c.final_score:.9g}\n")


def read_candidates(path, frame_count):
    """Per frame, a list of ``(xyxy box, cls_score)``."""
    per_frame = [[] for _ in range(frame_count)]
    for r in _rows(path, 9, "candidates"):
        f = int(r[0])
        if not 1 <= f <= frame_count:
            raise InputError(f"candidates reference frame {f} outside 1..{frame_count}")
        per_frame[f - 1].append((_xywh_to_xyxy(*r[2:6]), float(r[6])))
    return per_frame


def write_curve(path, rows, header=("threshold", "value")):
    with Path(path).open("w") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(f"{float(v):.6f}" for v in row) + "\n")


def write_table(path, rows):
    if not rows:
        raise ValueError("empty table")
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{v:.6f}" if isinstance(v, float) else v) for k, v in r.items()})
