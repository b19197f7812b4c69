"""Supervised and pseudo-label semi-supervised training of the gain network.

One optimizer step per sequence: the whole sequence is tracked on a single
tape, every (active track, frame) loss term is accumulated, and the gradient
is taken once at the end of the sequence.

Pseudo-labels come from a separate EKF tracker run on the same detections.
It never sees the gain network, so its output depends only on the detections
and the tracker config; it is computed once per scenario and cached.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import metrics
from .geometry import wrap_angle
from .gkf import GainNetConfig, GainNetwork, NonFiniteGainError, observe, run_sequence, selection_gain
from .neural import autodiff as ad
from .neural.autodiff import Tape, Var
from .neural.optim import OptimizerState, adamw_step, clip_global_norm, cosine_lr
from .scenario import Scenario
from .tracker import GkfMotion, Tracker, TrackerConfig, make_motion, track_sequence

log = logging.getLogger(__name__)

OBS_HEADING = 6


class TrainingDiverged(RuntimeError):
    pass


@dataclass
class TrainConfig:
    epochs: int = 3
    mode: str = "semi"
    max_lr: float = 1e-5
    min_lr: float | None = None
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    clip_norm: float = 10.0
    loss: str = "squared"
    huber_delta: float = 1.0
    pseudo_weight: float = 1.0
    annotation_gate: float = 2.0
    val_every: int = 0
    seed: int = 0
    max_restores: int = 3
    # initial gain diagonal on the observed state entries (0 = plain random init)
    gain_init: float = 0.0

    def __post_init__(self):
        if self.mode not in ("supervised", "semi"):
            raise ValueError(f"mode must be 'supervised' or 'semi', got {self.mode!r}")
        if self.loss not in ("squared", "huber"):
            raise ValueError(f"loss must be 'squared' or 'huber', got {self.loss!r}")
        if self.epochs < 0 or self.max_lr <= 0 or self.pseudo_weight < 0:
            raise ValueError("epochs >= 0, max_lr > 0 and pseudo_weight >= 0 required")


@dataclass
class SupervisionRecord:
    track_id: int
    frame_index: int
    target: np.ndarray  # loss components (x, y, z, w, l, h, yaw)
    source: str  # "annotation" | "pseudo_label"


# --------------------------------------------------------------- association
def associate_annotations(track_centers: Sequence, track_classes: Sequence[int],
                          ann_centers: Sequence, ann_classes: Sequence[int], gate: float = 2.0) -> dict[int, int]:
    """Greedy nearest-center matching within class, gated in BEV distance."""
    pairs = []
    for i, (tc, tk) in enumerate(zip(track_centers, track_classes)):
        for j, (ac, ak) in enumerate(zip(ann_centers, ann_classes)):
            if tk != ak:
                continue
            d = math.hypot(tc[0] - ac[0], tc[1] - ac[1])
            if d <= gate:
                pairs.append((d, i, j))
    pairs.sort()
    out: dict[int, int] = {}
    used = set()
    for _, i, j in pairs:
        if i in out or j in used:
            continue
        out[i] = j
        used.add(j)
    return out


# -------------------------------------------------------------------- losses
def _residual(est, target, heading_index=OBS_HEADING) -> Var:
    return ad.wrap_at(ad.const(est) - ad.const(np.asarray(target, dtype=float)), heading_index)


def _term(est, target, smooth: bool, delta: float, heading_index=OBS_HEADING) -> Var:
    r = _residual(est, target, heading_index)
    return ad.scale(ad.huber(r, delta), 2.0) if smooth else ad.sum_squares(r)


def supervised_loss(estimates: Sequence, targets: Sequence, smooth: bool = False, delta: float = 1.0,
                    heading_index: int | None = OBS_HEADING):
    """Sum over frames of squared residuals (heading wrapped).

    With ``smooth`` each component uses ``2 * huber`` so small residuals
    match the squared loss exactly. Returns a Var when any input is a Var.
    """
    if len(estimates) != len(targets):
        raise ValueError("estimates and targets must be aligned")
    out = ad.total([_term(e, t, smooth, delta, heading_index) for e, t in zip(estimates, targets)])
    return out if any(isinstance(e, Var) and e.tape is not None for e in estimates) else float(out.value)


def gain_gradient_closed_form(K, dy, dX) -> np.ndarray:
    """d ||K dy - dX||^2 / dK = 2 (K dy - dX) dy^T."""
    K, dy, dX = (np.asarray(a, dtype=float) for a in (K, dy, dX))
    return 2.0 * np.outer(K @ dy - dX, dy)


def semi_supervised_loss(records: Sequence[SupervisionRecord], estimates: dict, smooth: bool = False,
                         delta: float = 1.0, pseudo_weight: float = 1.0):
    """Annotation term plus weighted pseudo-label term.

    ``estimates`` maps ``(track_id, frame_index)`` to loss-component vectors.
    Returns ``(loss, diagnostics)``; loss is a Var when estimates are taped.
    """
    ann, pseudo = [], []
    for r in records:
        est = estimates[(r.track_id, r.frame_index)]
        (ann if r.source == "annotation" else pseudo).append(_term(est, r.target, smooth, delta))
    covered = {(r.track_id, r.frame_index) for r in records}
    la = ad.total(ann)
    lp = ad.total(pseudo)
    loss = la + ad.scale(lp, pseudo_weight) if pseudo else la
    diag = {
        "loss_annotation": float(la.value), "loss_pseudo": float(lp.value),
        "n_annotation": len(ann), "n_pseudo": len(pseudo),
        "n_unsupervised": sum(1 for k in estimates if k not in covered),
    }
    taped = any(isinstance(e, Var) and e.tape is not None for e in estimates.values())
    return (loss if taped else float(loss.value)), diag


# -------------------------------------------------------------- teacher run
def teacher_tracks(scenario: Scenario, tracker_config: TrackerConfig) -> list[list[tuple[int, np.ndarray]]]:
    """Per frame, ``(class_id, observation-space posterior)`` of every live EKF track."""
    tracker = Tracker(tracker_config, make_motion("EKF", tracker_config))
    out = []
    for k, f in enumerate(scenario.frames):
        tracker.step(f.detections, k, f.timestamp)
        out.append([(t.class_id, tracker.motion.model.h(t.state.mean)) for t in tracker.tracks])
    return out


# ------------------------------------------------------------- one sequence
def sequence_loss(net: GainNetwork, scenario: Scenario, tracker_config: TrackerConfig, config: TrainConfig,
                  teacher=None, tape: Tape | None = None):
    """Track ``scenario`` with the gain network on ``tape`` and assemble the loss."""
    motion = make_motion("GRU-KF", tracker_config, net, tape)
    tracker = Tracker(tracker_config, motion)
    model = motion.model
    records: list[SupervisionRecord] = []
    estimates: dict = {}
    for k, f in enumerate(scenario.frames):
        tracker.step(f.detections, k, f.timestamp)
        active = [t for t in tracker.tracks if t.status == "active"]
        if not active:
            continue
        est = {t.id: observe(model, motion.estimate_var(t.state)) for t in active}
        centers = [est[t.id].value[:2] for t in active]
        classes = [t.class_id for t in active]
        annos = scenario.visible_annotations(k)
        amap = associate_annotations(centers, classes, [a.box.center[:2] for a in annos],
                                     [a.class_id for a in annos], config.annotation_gate)
        rest = []
        for i, t in enumerate(active):
            estimates[(t.id, k)] = est[t.id]
            if i in amap:
                records.append(SupervisionRecord(t.id, k, annos[amap[i]].box.to_vector(), "annotation"))
            else:
                rest.append(i)
        if config.mode == "semi" and rest and teacher is not None:
            tt = teacher[k]
            pmap = associate_annotations([centers[i] for i in rest], [classes[i] for i in rest],
                                         [o[:2] for _, o in tt], [c for c, _ in tt], config.annotation_gate)
            for a, b in pmap.items():
                t = active[rest[a]]
                records.append(SupervisionRecord(t.id, k, np.array(tt[b][1]), "pseudo_label"))
    return semi_supervised_loss(records, estimates, config.loss == "huber", config.huber_delta,
                                config.pseudo_weight)


# ------------------------------------------------------------------- train
@dataclass
class TrainResult:
    net: GainNetwork
    opt: OptimizerState
    log: list[dict] = field(default_factory=list)
    restores: int = 0


def validation_amota(net: GainNetwork, scenarios: Sequence[Scenario], tracker_config: TrackerConfig) -> float:
    vals = []
    for sc in scenarios:
        out = track_sequence(sc.detection_frames(), "GRU-KF", tracker_config, net)
        vals.append(metrics.evaluate(metrics.track_eval_frames(out), metrics.gt_eval_frames(sc)).amota)
    return float(np.mean(vals)) if vals else float("nan")


def train(sequences: Sequence[Scenario], config: TrainConfig, tracker_config: TrackerConfig,
          net: GainNetwork | None = None, net_config: GainNetConfig | None = None,
          val_sequences: Sequence[Scenario] = (), log_path=None,
          callback: Callable[[dict, GainNetwork], bool | None] | None = None) -> TrainResult:
    """Train a gain network; ``callback(record, net)`` returning True stops early."""
    if not sequences:
        raise ValueError("need at least one training sequence")
    model = tracker_config.model()
    if net is None:
        gain = selection_gain(model, config.gain_init) if config.gain_init else None
        net = GainNetwork.initialize(net_config or GainNetConfig(model.state_dim, model.obs_dim), config.seed, gain)
    opt = OptimizerState(config.max_lr, config.weight_decay, config.beta1, config.beta2, config.eps)
    teachers = [teacher_tracks(sc, tracker_config) if config.mode == "semi" else None for sc in sequences]
    total_steps = config.epochs * len(sequences)
    result = TrainResult(net, opt)
    good = (net.copy(), opt.copy())
    lr_scale = 1.0
    fh = open(log_path, "w") if log_path else None
    try:
        step = 0
        for epoch in range(config.epochs):
            for si, sc in enumerate(sequences):
                lr = lr_scale * cosine_lr(step, total_steps, config.max_lr, config.min_lr)
                tape = Tape()
                try:
                    loss, diag = sequence_loss(net, sc, tracker_config, config, teachers[si], tape)
                    finite = math.isfinite(float(ad.const(loss).value))
                except NonFiniteGainError:
                    finite, diag, loss = False, {}, None
                if not finite:
                    result.restores += 1
                    if result.restores > config.max_restores:
                        raise TrainingDiverged(f"loss diverged {result.restores} times; aborting at step {step}")
                    net.params = {k: v.copy() for k, v in good[0].params.items()}
                    net.invalidate()
                    result.opt = opt = good[1].copy()
                    lr_scale *= 0.5
                    log.warning("non-finite loss at step %d; restored last good state, lr scale %.3g", step, lr_scale)
                    step += 1
                    continue
                if isinstance(loss, Var) and loss.tape is not None:
                    grads = tape.backward(loss)
                else:
                    grads = {k: np.zeros_like(v) for k, v in net.params.items()}
                grads, norm, clipped = clip_global_norm(grads, config.clip_norm)
                adamw_step(net.params, grads, opt, lr)
                net.invalidate()
                good = (net.copy(), opt.copy())
                step += 1
                n_sup = diag["n_annotation"] + diag["n_pseudo"]
                rec = {
                    "step": step, "epoch": epoch, "sequence": si, "lr": lr,
                    "loss": float(ad.const(loss).value), **diag,
                    "annotation_coverage": diag["n_annotation"] / n_sup if n_sup else 0.0,
                    "grad_norm": norm, "clipped": clipped,
                }
                if val_sequences and config.val_every and step % config.val_every == 0:
                    rec["val_amota"] = validation_amota(net, val_sequences, tracker_config)
                result.log.append(rec)
                if fh:
                    fh.write(json.dumps(rec, sort_keys=True) + "\n")
                if callback is not None and callback(rec, net):
                    return result
    finally:
        if fh:
            fh.close()
    return result


# ------------------------------------------------------- plain sequences
def train_on_sequences(net: GainNetwork, model, data: Sequence[tuple], config: TrainConfig,
                       dt: float = 1.0, callback=None) -> TrainResult:
    """Fully supervised training on ``(x0, observations, targets)`` triples.

    Targets are either full states or observation-space vectors; the loss is
    the squared (heading-wrapped) error summed over the sequence. One
    optimizer step per sequence.
    """
    opt = OptimizerState(config.max_lr, config.weight_decay, config.beta1, config.beta2, config.eps)
    total_steps = max(config.epochs * len(data), 1)
    result = TrainResult(net, opt)
    step = 0
    for _ in range(config.epochs):
        for x0, ys, xs in data:
            tape = Tape()
            pv = net.bind(tape)
            posts = run_sequence(net, model, x0, ys, dt, tape, pv)
            terms = []
            for p, x in zip(posts, xs):
                x = np.asarray(x, dtype=float)
                if x.shape[0] == model.state_dim:
                    terms.append(ad.sum_squares(ad.wrap_at(p - ad.const(x), getattr(model, "heading_index", None))))
                else:
                    terms.append(ad.sum_squares(ad.wrap_at(observe(model, p) - ad.const(x),
                                                           getattr(model, "obs_heading_index", None))))
            loss = ad.total(terms)
            grads, norm, clipped = clip_global_norm(tape.backward(loss), config.clip_norm)
            lr = cosine_lr(step, total_steps, config.max_lr, config.min_lr)
            adamw_step(net.params, grads, opt, lr)
            net.invalidate()
            step += 1
            rec = {"step": step, "lr": lr, "loss": float(loss.value), "grad_norm": norm, "clipped": clipped}
            result.log.append(rec)
            if callback is not None and callback(rec, net):
                return result
    return result
