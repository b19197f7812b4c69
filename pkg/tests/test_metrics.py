import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gkftrack.metrics import EvalBox, EvalConfig, evaluate, match_for_eval


def box(k, x, y, tid, score=1.0, cls=0):
    return EvalBox(k, x, y, cls, tid, score)


# ------------------------------------------------------------- matching
def test_identical_predictions_are_all_true_positives():
    gt = [[box(k, k, 0, 0), box(k, k, 5, 1)] for k in range(4)]
    fm = match_for_eval(gt, gt)
    assert all(len(f.matches) == 2 and f.fp == f.fn == f.ids == 0 for f in fm)


def test_one_relabel_is_one_switch():
    gt = [[box(k, k, 0, 0)] for k in range(10)]
    pred = [[box(k, k, 0, 7 if k < 5 else 8)] for k in range(10)]
    assert sum(f.ids for f in match_for_eval(pred, gt)) == 1


def test_crossing_swap_event_list():
    # two objects pass each other; the tracker swaps their ids at frame 3,
    # misses object 1 at frame 4 and emits a far false positive at frame 5
    gts, preds = [], []
    for k in range(6):
        g0, g1 = (-2.5 + k, 0.0), (2.5 - k, 0.6)
        gts.append([box(k, *g0, 0), box(k, *g1, 1)])
        a, b = (1, 2) if k < 3 else (2, 1)
        f = [box(k, *g0, a)]
        if k != 4:
            f.append(box(k, *g1, b))
        if k == 5:
            f.append(box(k, 0.0, 10.0, 3))
        preds.append(f)
    fm = match_for_eval(preds, gts)
    events = [(len(f.matches), f.fp, f.fn, f.ids) for f in fm]
    assert events == [(2, 0, 0, 0), (2, 0, 0, 0), (2, 0, 0, 0), (2, 0, 0, 2), (1, 0, 1, 0), (2, 1, 0, 0)]
    assert [(g, p) for g, p, _ in fm[3].matches] == [(0, 0), (1, 1)]


def test_matching_respects_class_and_gate():
    gt = [[box(0, 0, 0, 0, cls=0)]]
    assert match_for_eval([[box(0, 0, 0, 0, cls=1)]], gt)[0].fn == 1
    assert match_for_eval([[box(0, 2.01, 0, 0)]], gt)[0].fp == 1
    assert len(match_for_eval([[box(0, 2.0, 0, 0)]], gt)[0].matches) == 1


def test_frame_count_mismatch_rejected():
    with pytest.raises(ValueError):
        match_for_eval([[]], [[], []])


# ------------------------------------------------------------- evaluate
def scripted_case():
    """Ten frames, two objects, one far false positive, one miss, one switch."""
    gts, preds = [], []
    for k in range(10):
        gts.append([box(k, 10.0 * k, 0.0, 0), box(k, 10.0 * k, 20.0, 1)])
        f = [box(k, 10.0 * k + 0.1, 0.0, 10, 0.9)]
        if k < 5:
            f.append(box(k, 10.0 * k, 20.2, 20, 0.8))
        elif k < 9:
            f.append(box(k, 10.0 * k, 20.2, 21, 0.7))
        if k == 3:
            f.append(box(k, 500.0, 500.0, 30, 0.95))
        preds.append(f)
    return preds, gts


def test_scripted_ten_frame_table():
    preds, gts = scripted_case()
    rep = evaluate(preds, gts)
    rows = rep.classes[0].rows
    # hand table, P = 20. The FP (score 0.95) survives every cut.
    # r <= 0.5: cut 0.9, object 0 only: TP 10, FN 10, FP 1 -> 1 - (1 + 10 - 10) / 10
    # r 0.6, 0.7: cut 0.8, TP 15, FN 5, FP 1 -> 1 - (1 + 5 - 5) / 15
    # r 0.8, 0.9: cut 0.7, TP 19, FN 1, FP 1, IDS 1 -> 1 - (1 + 1 + 1 - 1) / 19
    # r 1.0: 19 TP at most, not reachable
    motar = [0.9] * 5 + [14 / 15] * 2 + [17 / 19] * 2 + [0.0]
    cuts = [0.9] * 5 + [0.8] * 2 + [0.7] * 2 + [None]
    counts = [(10, 1, 10, 0)] * 5 + [(15, 1, 5, 0)] * 2 + [(19, 1, 1, 1)] * 2 + [(0, 0, 0, 0)]
    motp = [0.1] * 5 + [2.0 / 15] * 2 + [(1.0 + 9 * 0.2) / 19] * 2 + [2.0]
    for row, m, c, n, d in zip(rows, motar, cuts, counts, motp):
        assert row.motar == pytest.approx(m, abs=1e-12)
        assert row.score_cut == c
        assert (row.tp, row.fp, row.fn, row.ids) == n
        assert row.motp == pytest.approx(d, abs=1e-12)
    assert [r.achieved for r in rows] == [True] * 9 + [False]
    assert rep.amota == pytest.approx(sum(motar) / 10, abs=1e-12)
    assert rep.amota == pytest.approx(0.8156140350877193, abs=1e-12)
    assert rep.amotp == pytest.approx(sum(motp) / 10, abs=1e-12)
    # best MOTAR is at r = 0.7, before the switching track is admitted
    assert rep.ids == 0


def test_perfect_tracker():
    gt = [[box(k, k, 0, 0), box(k, k, 9, 1)] for k in range(10)]
    rep = evaluate(gt, gt)
    assert rep.amota == 1.0 and rep.amotp == 0.0 and rep.ids == 0


def test_empty_output_scores_zero():
    gt = [[box(k, k, 0, 0)] for k in range(5)]
    rep = evaluate([[] for _ in range(5)], gt)
    assert rep.amota == 0.0 and rep.amotp == 2.0
    assert not any(r.achieved for r in rep.classes[0].rows)


def test_classes_averaged_and_unknown_classes_excluded():
    gt = [[box(0, 0, 0, 0, cls=0), box(0, 9, 9, 1, cls=1)]]
    pred = [[box(0, 0, 0, 0, cls=0), box(0, 50, 50, 5, cls=4)]]
    rep = evaluate(pred, gt)
    assert rep.classes[0].amota == 1.0 and rep.classes[1].amota == 0.0
    assert rep.amota == 0.5 and rep.excluded_classes == [4]


def test_report_serializations():
    rep = evaluate(*scripted_case())
    d = rep.to_dict()
    assert d["amota"] == rep.amota and len(d["classes"]["0"]["rows"]) == 10
    lines = rep.to_csv().splitlines()
    assert lines[0].startswith("class,recall_threshold") and len(lines) == 11


# ------------------------------------------------------------- properties
@st.composite
def scenes(draw):
    """Objects on a 10 m grid so noisy predictions always match their source."""
    seed = draw(st.integers(0, 2**32 - 1))
    n_obj, n_frames = draw(st.integers(1, 4)), draw(st.integers(1, 8))
    rng = np.random.default_rng(seed)
    gts, preds = [], []
    for k in range(n_frames):
        g, p = [], []
        for i in range(n_obj):
            x, y = 10.0 * i + 0.3 * k, 0.0
            g.append(box(k, x, y, i))
            if rng.random() < 0.8:
                p.append(box(k, x + rng.normal(0, 0.3), y + rng.normal(0, 0.3),
                             int(rng.integers(0, 3)), float(rng.uniform(0.1, 1.0))))
        for _ in range(rng.integers(0, 2)):
            p.append(box(k, rng.uniform(200, 300), rng.uniform(200, 300), 99, float(rng.uniform(0.1, 1.0))))
        gts.append(g)
        preds.append(p)
    return preds, gts


def _source(b):
    return int(round((b.x - 0.3 * b.frame) / 10.0)) if b.x < 100 else None


@settings(max_examples=60, deadline=None)
@given(scenes(), st.integers(1, 3))
def test_injected_top_score_false_positives_never_raise_amota(scene, n_fp):
    preds, gts = scene
    base = evaluate(preds, gts).amota
    more = [list(f) for f in preds]
    for j in range(n_fp):
        k = j % len(more)
        more[k].append(box(k, -500.0 - 10 * j, -500.0, 1000 + j, 2.0))
    assert evaluate(more, gts).amota <= base + 1e-12


@settings(max_examples=60, deadline=None)
@given(scenes(), st.integers(0, 2**32 - 1))
def test_amotp_invariant_to_relabeling(scene, seed):
    preds, gts = scene
    perm = np.random.default_rng(seed).permutation(200)
    relabeled = [[EvalBox(b.frame, b.x, b.y, b.class_id, int(perm[b.track_id]), b.score) for b in f] for f in preds]
    assert evaluate(relabeled, gts).amotp == evaluate(preds, gts).amotp


@settings(max_examples=60, deadline=None)
@given(scenes())
def test_consistent_ids_never_lower_amota(scene):
    preds, gts = scene
    fixed = [[EvalBox(b.frame, b.x, b.y, b.class_id, s if (s := _source(b)) is not None else 500 + i, b.score)
              for i, b in enumerate(f)] for f in preds]
    rep = evaluate(fixed, gts)
    assert all(r.ids == 0 for r in rep.classes[0].rows)
    assert rep.amota >= evaluate(preds, gts).amota - 1e-12


@settings(max_examples=30, deadline=None)
@given(scenes())
def test_evaluate_is_deterministic_and_pure(scene):
    preds, gts = scene
    snapshot = ([list(f) for f in preds], [list(f) for f in gts])
    a, b = evaluate(preds, gts), evaluate(preds, gts)
    assert a.to_dict() == b.to_dict()
    assert (preds, gts) == snapshot


def test_fewer_thresholds_configurable():
    preds, gts = scripted_case()
    rep = evaluate(preds, gts, EvalConfig(n_thresholds=2))
    # r = 0.5 -> 0.9, r = 1.0 unreachable
    assert rep.amota == pytest.approx(0.45) and math.isclose(rep.classes[0].rows[0].motar, 0.9)
