"""Frame-by-frame tracking: preprocessing, two-stage association, motion updates
and confidence-based trajectory lifecycle."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import filters
from .geometry import Box3D, giou3d, giou_bev, nms
from .gkf import GainNetwork, TrackHidden, gkf_coast, gkf_predict, gkf_update
from .motion import MotionModel
from .scenario import DetectionBox

BIG = 1e6


@dataclass
class TrackerConfig:
    motion_model: str = "CTRA"
    beta: float = 0.5
    score_threshold: float = 0.2
    nms_threshold: float = 0.08
    tau_3d: float = 0.3
    tau_bev: float = 0.0
    birth_threshold: float = 0.3
    decay: float = 0.25
    delete_threshold: float = 0.05
    max_coast: int = 5
    hit_min: int = 2
    assignment: str = "hungarian"
    flip_heading: bool = True
    q_diag: tuple | None = None
    r_diag: tuple | None = None
    p0_diag: tuple | None = None

    def __post_init__(self):
        if self.assignment not in ("hungarian", "greedy"):
            raise ValueError(f"assignment must be 'hungarian' or 'greedy', got {self.assignment!r}")
        if not 0.0 < self.nms_threshold <= 1.0:
            raise ValueError("nms_threshold must lie in (0, 1]")
        if self.tau_bev > self.tau_3d:
            raise ValueError("tau_bev must not exceed tau_3d")
        if self.decay < 0 or self.max_coast < 0 or self.hit_min < 1:
            raise ValueError("decay, max_coast must be >= 0 and hit_min >= 1")

    def model(self) -> MotionModel:
        kw = {}
        for k in ("q_diag", "r_diag", "p0_diag"):
            if getattr(self, k) is not None:
                kw[k] = tuple(getattr(self, k))
        return MotionModel(self.motion_model, beta=self.beta, **kw)


# ------------------------------------------------------------ preprocessing
def preprocess(raw: Sequence[DetectionBox], score_threshold: float = 0.2, nms_threshold: float = 0.08) -> list[DetectionBox]:
    """Score filter, then per-class BEV NMS. Output keeps the input order."""
    kept = [d for d in raw if d.score >= score_threshold]
    survivors = []
    for cls in sorted({d.class_id for d in kept}):
        members = [i for i, d in enumerate(kept) if d.class_id == cls]
        keep = nms([(kept[i].box, kept[i].score) for i in members], nms_threshold)
        survivors.extend(members[k] for k in keep)
    return [kept[i] for i in sorted(survivors)]


# -------------------------------------------------------------- association
@dataclass
class AssociationResult:
    matches: list[tuple[int, int]]
    unmatched_tracks: list[int]
    unmatched_detections: list[int]
    stage_of: dict = field(default_factory=dict)


def assign_stage(similarity: np.ndarray, threshold: float, method: str = "hungarian") -> list[tuple[int, int]]:
    """One association stage over a (tracks x detections) similarity matrix.

    Entries of -inf mark forbidden pairs. Hungarian minimises the summed cost
    ``-similarity`` (forbidden pairs cost ``BIG``), then drops assigned pairs
    below ``threshold``. Greedy takes pairs in descending similarity.
    """
    sim = np.asarray(similarity, dtype=float)
    if sim.size == 0:
        return []
    if method == "greedy":
        pairs = sorted(
            ((sim[i, j], i, j) for i in range(sim.shape[0]) for j in range(sim.shape[1])
             if np.isfinite(sim[i, j]) and sim[i, j] >= threshold),
            key=lambda t: (-t[0], t[1], t[2]),
        )
        used_r, used_c, out = set(), set(), []
        for _, i, j in pairs:
            if i not in used_r and j not in used_c:
                used_r.add(i)
                used_c.add(j)
                out.append((i, j))
        return sorted(out)
    cost = np.where(np.isfinite(sim), -sim, BIG)
    rows, cols = linear_sum_assignment(cost)
    return [(int(i), int(j)) for i, j in zip(rows, cols) if np.isfinite(sim[i, j]) and sim[i, j] >= threshold]


def similarity_matrix(track_boxes, track_classes, det_boxes, det_classes, metric) -> np.ndarray:
    sim = np.full((len(track_boxes), len(det_boxes)), -np.inf)
    for i, (tb, tc) in enumerate(zip(track_boxes, track_classes)):
        for j, (db, dc) in enumerate(zip(det_boxes, det_classes)):
            if tc == dc:
                sim[i, j] = metric(tb, db)
    return sim


def associate(track_boxes: Sequence[Box3D], track_classes: Sequence[int], detections: Sequence[DetectionBox],
              config: TrackerConfig) -> AssociationResult:
    """Two-stage matching: 3D GIoU first, then BEV GIoU on the leftovers."""
    det_boxes = [d.box for d in detections]
    det_classes = [d.class_id for d in detections]
    sim3 = similarity_matrix(track_boxes, track_classes, det_boxes, det_classes, giou3d)
    stage1 = assign_stage(sim3, config.tau_3d, config.assignment)
    left_t = [i for i in range(len(track_boxes)) if i not in {a for a, _ in stage1}]
    left_d = [j for j in range(len(detections)) if j not in {b for _, b in stage1}]
    sim2 = similarity_matrix([track_boxes[i] for i in left_t], [track_classes[i] for i in left_t],
                             [det_boxes[j] for j in left_d], [det_classes[j] for j in left_d], giou_bev)
    stage2 = [(left_t[a], left_d[b]) for a, b in assign_stage(sim2, config.tau_bev, config.assignment)]
    matches = sorted(stage1 + stage2)
    mt = {a for a, _ in matches}
    md = {b for _, b in matches}
    stage_of = {m: 1 for m in stage1} | {m: 2 for m in stage2}
    return AssociationResult(
        matches,
        [i for i in range(len(track_boxes)) if i not in mt],
        [j for j in range(len(detections)) if j not in md],
        stage_of,
    )


# ----------------------------------------------------------- motion modules
class EkfMotion:
    name = "EKF"

    def __init__(self, model: MotionModel, flip_heading: bool = True):
        self.model = model
        self.flip = flip_heading

    def init(self, det: DetectionBox):
        return filters.init_state(self.model, self.model.state_from_box(det.obs(), det.velocity))

    def predict(self, state, dt):
        return filters.ekf_predict(state, self.model, dt)

    def prior_obs(self, prior) -> np.ndarray:
        return prior.predicted_obs

    def update(self, state, prior, det: DetectionBox | None):
        if det is None:
            return filters.coast(prior)
        return filters.ekf_update(prior, det.obs(), self.model, self.flip)

    def estimate(self, state) -> np.ndarray:
        return state.mean


class GkfMotion:
    name = "GRU-KF"

    def __init__(self, net: GainNetwork, model: MotionModel, flip_heading: bool = True, tape=None):
        if net.config.state_dim != model.state_dim or net.config.obs_dim != model.obs_dim:
            raise ValueError(
                f"gain network ({net.config.state_dim}x{net.config.obs_dim}) does not fit "
                f"{model.kind} ({model.state_dim}x{model.obs_dim})")
        self.net = net
        self.model = model
        self.flip = flip_heading
        self.tape = tape
        self.pv = net.bind(tape)

    def init(self, det: DetectionBox) -> TrackHidden:
        return TrackHidden.reset(self.net.config, self.model.state_from_box(det.obs(), det.velocity))

    def predict(self, state: TrackHidden, dt):
        return gkf_predict(state, self.model, dt)

    def prior_obs(self, prior) -> np.ndarray:
        return self.model.h(prior.value)

    def update(self, state: TrackHidden, prior, det: DetectionBox | None) -> TrackHidden:
        if det is None:
            return gkf_coast(state, prior)[1]
        return gkf_update(self.net, state, prior, det.obs(), self.model, self.flip, self.pv)[1]

    def estimate(self, state: TrackHidden) -> np.ndarray:
        return state.last_posterior.value

    def estimate_var(self, state: TrackHidden):
        return state.last_posterior


# --------------------------------------------------------------- lifecycle
@dataclass
class Trajectory:
    id: int
    class_id: int
    state: Any
    confidence: float
    age: int = 1
    hits: int = 1
    time_since_update: int = 0
    status: str = "tentative"
    history: list = field(default_factory=list)
    prior: Any = None
    updated_this_frame: bool = True


@dataclass(frozen=True)
class TrackOutput:
    frame_index: int
    timestamp: float
    track_id: int
    class_id: int
    box: Box3D
    velocity: tuple
    score: float


class Tracker:
    def __init__(self, config: TrackerConfig, motion):
        self.config = config
        self.motion = motion
        self.tracks: list[Trajectory] = []
        self.dead: list[Trajectory] = []
        self.next_id = 0
        self.frame_count = 0
        self.last_timestamp: float | None = None

    def predicted_boxes(self) -> list[Box3D]:
        return [Box3D.from_vector(_valid_obs(self.motion.prior_obs(t.prior))) for t in self.tracks]

    def step(self, detections: Sequence[DetectionBox], frame_index: int, timestamp: float) -> list[TrackOutput]:
        cfg = self.config
        if self.last_timestamp is not None and timestamp < self.last_timestamp:
            raise ValueError(f"timestamps must be non-decreasing (frame {frame_index})")
        dt = 0.0 if self.last_timestamp is None else timestamp - self.last_timestamp
        self.last_timestamp = timestamp
        self.frame_count += 1
        dets = preprocess(detections, cfg.score_threshold, cfg.nms_threshold)

        for t in self.tracks:
            t.prior = self.motion.predict(t.state, dt)
        assoc = associate(self.predicted_boxes(), [t.class_id for t in self.tracks], dets, cfg)
        self.last_association = assoc
        self.last_detections = dets

        decay = math.exp(-cfg.decay)
        for ti, dj in assoc.matches:
            t, d = self.tracks[ti], dets[dj]
            t.state = self.motion.update(t.state, t.prior, d)
            t.confidence = max(d.score, t.confidence * decay)
            t.time_since_update = 0
            t.hits += 1
            t.age += 1
            t.updated_this_frame = True
            if t.status == "tentative" and t.hits >= cfg.hit_min:
                t.status = "active"
        for ti in assoc.unmatched_tracks:
            t = self.tracks[ti]
            t.state = self.motion.update(t.state, t.prior, None)
            t.confidence *= decay
            t.time_since_update += 1
            t.age += 1
            t.updated_this_frame = False
            if t.status == "tentative" or t.confidence < cfg.delete_threshold or t.time_since_update > cfg.max_coast:
                t.status = "dead"
        for t in self.tracks:
            if t.status == "dead":
                self.dead.append(t)
        self.tracks = [t for t in self.tracks if t.status != "dead"]

        for dj in assoc.unmatched_detections:
            d = dets[dj]
            if d.score < cfg.birth_threshold:
                continue
            t = Trajectory(self.next_id, d.class_id, self.motion.init(d), d.score)
            if cfg.hit_min <= 1:
                t.status = "active"
            self.next_id += 1
            self.tracks.append(t)

        out = []
        for t in self.tracks:
            # during the first hit_min frames tentative tracks are reported too
            if t.status == "active" or self.frame_count <= cfg.hit_min:
                x = self.motion.estimate(t.state)
                o = TrackOutput(frame_index, timestamp, t.id, t.class_id,
                                Box3D.from_vector(_valid_obs(self.motion.model.h(x))),
                                tuple(float(v) for v in self.motion.model.velocity(x)), float(t.confidence))
                t.history.append(o)
                out.append(o)
        return out


def _valid_obs(obs: np.ndarray) -> np.ndarray:
    """Clamp sizes to stay positive so an estimate always renders as a valid box."""
    obs = np.array(obs, dtype=float)
    obs[3:6] = np.maximum(obs[3:6], 1e-3)
    return obs


def make_motion(mode: str, config: TrackerConfig, net: GainNetwork | None = None, tape=None):
    model = config.model()
    if mode.upper() == "EKF":
        return EkfMotion(model, config.flip_heading)
    if mode.upper() in ("GRU-KF", "GKF", "GRU"):
        if net is None:
            raise ValueError("GRU-KF mode needs a gain network checkpoint")
        return GkfMotion(net, model, config.flip_heading, tape)
    raise ValueError(f"unknown motion mode {mode!r}")


def track_sequence(frames: Sequence[tuple[float, Sequence[DetectionBox]]], motion_mode: str = "EKF",
                   config: TrackerConfig | None = None, net: GainNetwork | None = None) -> list[list[TrackOutput]]:
    """Run the tracker over ``(timestamp, detections)`` frames; returns per-frame outputs."""
    config = config or TrackerConfig()
    tracker = Tracker(config, make_motion(motion_mode, config, net))
    return [tracker.step(dets, i, ts) for i, (ts, dets) in enumerate(frames)]
