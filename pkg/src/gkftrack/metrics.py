"""AMOTA / AMOTP / IDS over a recall-threshold sweep.

Matching is greedy by BEV center distance within class. At every recall
threshold r the predictions are cut at the score that first reaches r true
positives when all predictions are matched (the nuScenes recipe), the
sequence is re-matched with only those predictions, and

    MOTAR_r = max(0, 1 - (IDS + FP + FN - (1 - R) P) / (R P))

with R the recall actually reached at the cut (R >= r; score ties can push
it above r). Using R keeps MOTAR in [0, 1] and a perfect tracker at 1.

Thresholds that cannot be reached score MOTAR 0 and the worst MOTP (the
matching gate). AMOTP is in meters, not the x100 scale used on leaderboards.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np


@dataclass(frozen=True)
class EvalBox:
    """Minimal box for evaluation: BEV center, class, identity and score."""
    frame: int
    x: float
    y: float
    class_id: int
    track_id: int
    score: float = 1.0


@dataclass
class EvalConfig:
    dist_gate: float = 2.0
    n_thresholds: int = 10


@dataclass
class FrameMatches:
    matches: list  # (gt index, pred index, distance)
    fp: int
    fn: int
    ids: int


@dataclass
class ThresholdRow:
    recall_threshold: float
    score_cut: float | None
    tp: int
    fp: int
    fn: int
    ids: int
    motar: float
    motp: float
    achieved: bool


@dataclass
class ClassReport:
    class_id: int
    amota: float
    amotp: float
    ids: int
    n_gt: int
    rows: list[ThresholdRow] = field(default_factory=list)


@dataclass
class EvalReport:
    amota: float
    amotp: float
    ids: int
    classes: dict[int, ClassReport]
    excluded_classes: list[int] = field(default_factory=list)
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "amota": self.amota, "amotp": self.amotp, "ids": self.ids,
            "classes": {str(k): asdict(v) for k, v in sorted(self.classes.items())},
            "excluded_classes": self.excluded_classes, "config": self.config,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["class", "recall_threshold", "score_cut", "tp", "fp", "fn", "ids", "motar", "motp", "achieved"])
        for cid, rep in sorted(self.classes.items()):
            for r in rep.rows:
                w.writerow([cid, repr(r.recall_threshold), "" if r.score_cut is None else repr(r.score_cut),
                            r.tp, r.fp, r.fn, r.ids, repr(r.motar), repr(r.motp), int(r.achieved)])
        return buf.getvalue()


def _group(frames: Sequence[Sequence[EvalBox]]):
    return [list(f) for f in frames]


def match_for_eval(pred_frames: Sequence[Sequence[EvalBox]], gt_frames: Sequence[Sequence[EvalBox]],
                   dist_gate: float = 2.0) -> list[FrameMatches]:
    """Per-frame greedy matching; an IDS is a gt whose matched track id changes."""
    if len(pred_frames) != len(gt_frames):
        raise ValueError("prediction and ground-truth frame counts differ")
    last_id: dict = {}
    out = []
    for preds, gts in zip(pred_frames, gt_frames):
        pairs = []
        for gi, g in enumerate(gts):
            for pi, p in enumerate(preds):
                if g.class_id != p.class_id:
                    continue
                d = math.hypot(g.x - p.x, g.y - p.y)
                if d <= dist_gate:
                    pairs.append((d, gi, pi))
        pairs.sort()
        used_g, used_p, matches = set(), set(), []
        for d, gi, pi in pairs:
            if gi in used_g or pi in used_p:
                continue
            used_g.add(gi)
            used_p.add(pi)
            matches.append((gi, pi, d))
        ids = 0
        for gi, pi, _ in matches:
            key = (gts[gi].class_id, gts[gi].track_id)
            pid = preds[pi].track_id
            if key in last_id and last_id[key] != pid:
                ids += 1
            last_id[key] = pid
        out.append(FrameMatches(sorted(matches), len(preds) - len(matches), len(gts) - len(matches), ids))
    return out


def _totals(fm: list[FrameMatches]):
    tp = sum(len(f.matches) for f in fm)
    fp = sum(f.fp for f in fm)
    fn = sum(f.fn for f in fm)
    ids = sum(f.ids for f in fm)
    dists = [d for f in fm for _, _, d in f.matches]
    return tp, fp, fn, ids, dists


def evaluate_class(pred_frames, gt_frames, class_id: int, config: EvalConfig) -> ClassReport:
    preds = [[p for p in f if p.class_id == class_id] for f in pred_frames]
    gts = [[g for g in f if g.class_id == class_id] for f in gt_frames]
    P = sum(len(f) for f in gts)
    L = config.n_thresholds
    thresholds = [(k + 1) / L for k in range(L)]
    full = match_for_eval(preds, gts, config.dist_gate)
    tp_scores = sorted((preds[t][pi].score for t, f in enumerate(full) for _, pi, _ in f.matches), reverse=True)
    rows = []
    for r in thresholds:
        need = math.ceil(round(r * P, 9))
        if P == 0 or need > len(tp_scores) or need == 0:
            rows.append(ThresholdRow(r, None, 0, 0, 0, 0, 0.0, config.dist_gate, False))
            continue
        cut = tp_scores[need - 1]
        kept = [[p for p in f if p.score >= cut] for f in preds]
        fm = match_for_eval(kept, gts, config.dist_gate)
        tp, fp, fn, ids, dists = _totals(fm)
        rec = tp / P
        motar = max(0.0, 1.0 - (ids + fp + fn - (1.0 - rec) * P) / (rec * P))
        motp = float(np.mean(dists)) if dists else config.dist_gate
        rows.append(ThresholdRow(r, cut, tp, fp, fn, ids, motar, motp, True))
    amota = float(np.mean([row.motar for row in rows]))
    amotp = float(np.mean([row.motp for row in rows]))
    achieved = [row for row in rows if row.achieved]
    ids = max(achieved, key=lambda row: (row.motar, row.recall_threshold)).ids if achieved else 0
    return ClassReport(class_id, amota, amotp, ids, P, rows)


def evaluate(pred_frames: Sequence[Sequence[EvalBox]], gt_frames: Sequence[Sequence[EvalBox]],
             config: EvalConfig | None = None) -> EvalReport:
    config = config or EvalConfig()
    pred_frames, gt_frames = _group(pred_frames), _group(gt_frames)
    if len(pred_frames) != len(gt_frames):
        raise ValueError("prediction and ground-truth frame counts differ")
    gt_classes = sorted({g.class_id for f in gt_frames for g in f})
    pred_classes = sorted({p.class_id for f in pred_frames for p in f})
    reports = {c: evaluate_class(pred_frames, gt_frames, c, config) for c in gt_classes}
    if reports:
        amota = float(np.mean([r.amota for r in reports.values()]))
        amotp = float(np.mean([r.amotp for r in reports.values()]))
        ids = int(sum(r.ids for r in reports.values()))
    else:
        amota, amotp, ids = 0.0, config.dist_gate, 0
    excluded = [c for c in pred_classes if c not in reports]
    return EvalReport(amota, amotp, ids, reports, excluded, asdict(config))


# ------------------------------------------------------------- adapters
def gt_eval_frames(scenario) -> list[list[EvalBox]]:
    return [[EvalBox(k, a.box.center[0], a.box.center[1], a.class_id, a.instance_id, 1.0) for a in f.gt]
            for k, f in enumerate(scenario.frames)]


def track_eval_frames(outputs, n_frames: int | None = None) -> list[list[EvalBox]]:
    """Tracker outputs (per-frame lists of TrackOutput) to evaluation frames."""
    n = len(outputs) if n_frames is None else n_frames
    frames: list[list[EvalBox]] = [[] for _ in range(n)]
    for k, frame in enumerate(outputs):
        for o in frame:
            frames[k].append(EvalBox(k, o.box.center[0], o.box.center[1], o.class_id, o.track_id, o.score))
    return frames


def position_rmse(outputs, scenario, dist_gate: float = 2.0) -> float:
    """RMSE of BEV center error over evaluation-matched (track, gt) pairs."""
    gts = gt_eval_frames(scenario)
    preds = track_eval_frames(outputs, len(gts))
    errs = [d for f in match_for_eval(preds, gts, dist_gate) for _, _, d in f.matches]
    return float(np.sqrt(np.mean(np.square(errs)))) if errs else float("nan")
