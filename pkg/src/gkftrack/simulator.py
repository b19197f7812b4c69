"""Synthetic multi-object scenarios with imperfect detections and partial annotations.

Randomness comes from numpy's ``Generator(PCG64(seed))``; PCG64 is a
documented, platform-independent bit generator, so a (config, seed) pair
always yields the same scenario.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .geometry import Box3D, wrap_angle
from .motion import KINDS, MotionModel
from .scenario import AnnotationBox, DetectionBox, Frame, Scenario

# class id -> nominal (w, l, h)
CLASS_SIZES = {0: (1.9, 4.5, 1.6), 1: (0.7, 0.7, 1.7), 2: (0.7, 1.8, 1.5)}
CLASS_NAMES = {0: "car", 1: "pedestrian", 2: "bicycle"}
PRESETS = ("random", "crossing", "convoy", "roundabout")
NOISE_MODES = ("gaussian", "student_t", "mixture")


class ConfigError(ValueError):
    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


@dataclass
class NoiseSpec:
    mode: str = "gaussian"
    position_scale: float = 0.2
    size_scale: float = 0.05
    heading_scale: float = 0.05
    velocity_scale: float = 0.3
    dof: float = 3.0
    outlier_prob: float = 0.1
    outlier_scale: float = 10.0
    drop_prob: float = 0.0
    fp_rate: float = 0.0
    score_floor: float = 0.05
    score_jitter: float = 0.1

    def validate(self):
        if self.mode not in NOISE_MODES:
            raise ConfigError("noise.mode", f"must be one of {NOISE_MODES}")
        for name in ("position_scale", "size_scale", "heading_scale", "velocity_scale", "fp_rate", "outlier_scale"):
            if getattr(self, name) < 0:
                raise ConfigError(f"noise.{name}", "must be >= 0")
        for name in ("outlier_prob", "drop_prob", "score_floor", "score_jitter"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ConfigError(f"noise.{name}", "must lie in [0, 1]")
        if self.dof <= 2:
            raise ConfigError("noise.dof", "must exceed 2")

    @property
    def is_noiseless(self) -> bool:
        return self.position_scale == self.size_scale == self.heading_scale == self.velocity_scale == 0.0


@dataclass
class SimConfig:
    preset: str = "random"
    n_objects: int = 6
    n_frames: int = 40
    period: float = 0.5
    motion_kinds: tuple = ("CV", "CA", "CTRA", "Bicycle")
    classes: tuple = (0,)
    area: float = 40.0
    speed_range: tuple = (3.0, 10.0)
    accel_std: float = 0.3
    turn_rate_std: float = 0.15
    beta: float = 0.5
    annotation_coverage: float = 1.0
    random_lifetimes: bool = False
    noise: NoiseSpec = field(default_factory=NoiseSpec)

    def validate(self):
        if self.preset not in PRESETS:
            raise ConfigError("preset", f"must be one of {PRESETS}")
        if self.n_objects < 0:
            raise ConfigError("n_objects", "must be >= 0")
        if self.n_frames < 0:
            raise ConfigError("n_frames", "must be >= 0")
        if self.period <= 0:
            raise ConfigError("period", "must be > 0")
        if not self.motion_kinds or any(k not in KINDS for k in self.motion_kinds):
            raise ConfigError("motion_kinds", f"entries must be in {KINDS}")
        if not self.classes or any(c not in CLASS_SIZES for c in self.classes):
            raise ConfigError("classes", f"entries must be in {sorted(CLASS_SIZES)}")
        if not 0.0 <= self.annotation_coverage <= 1.0:
            raise ConfigError("annotation_coverage", "must lie in [0, 1]")
        lo, hi = self.speed_range
        if lo < 0 or hi < lo:
            raise ConfigError("speed_range", "need 0 <= low <= high")
        if self.accel_std < 0 or self.turn_rate_std < 0 or self.area <= 0:
            raise ConfigError("accel_std", "accel_std, turn_rate_std must be >= 0 and area > 0")
        self.noise.validate()

    def to_dict(self) -> dict:
        d = asdict(self)
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in d.items()}


def _initial_state(model: MotionModel, pos, size, heading, speed, accel, turn_rate) -> np.ndarray:
    x = np.zeros(model.state_dim)
    x[0:3] = pos
    x[3:6] = size
    x[model.heading_index] = wrap_angle(heading)
    if model.kind in ("CV", "CA"):
        x[7], x[8] = speed * math.cos(heading), speed * math.sin(heading)
        if model.kind == "CA":
            x[9], x[10] = accel * math.cos(heading), accel * math.sin(heading)
    else:
        x[6], x[7], x[9] = speed, accel, turn_rate
    return x


def _spawn(config: SimConfig, rng: np.random.Generator):
    """Yields (kind, class_id, pos, heading, speed, accel, turn_rate) per object."""
    n = config.n_objects
    lo, hi = config.speed_range
    for i in range(n):
        kind = config.motion_kinds[int(rng.integers(len(config.motion_kinds)))]
        cls = config.classes[int(rng.integers(len(config.classes)))]
        speed = float(rng.uniform(lo, hi))
        accel = float(rng.normal(0.0, config.accel_std))
        omega = float(rng.normal(0.0, config.turn_rate_std))
        if config.preset == "random":
            pos = rng.uniform(-config.area, config.area, size=2)
            heading = float(rng.uniform(-math.pi, math.pi))
        elif config.preset == "crossing":
            # two flows crossing at the origin, staggered along their lanes
            side = i % 2
            lane = 3.5 * (i // 2 % 2) - 1.75
            back = config.area * 0.5 + 8.0 * (i // 4) + float(rng.uniform(-2.0, 2.0))
            heading = 0.0 if side == 0 else 0.5 * math.pi
            pos = np.array([-back, lane]) if side == 0 else np.array([lane, -back])
            omega = 0.0 if kind in ("CTRA", "Bicycle") else omega
        elif config.preset == "convoy":
            lane = 3.5 * (i % 2)
            pos = np.array([-config.area + 10.0 * (i // 2) + float(rng.uniform(-1.0, 1.0)), lane])
            heading = float(rng.normal(0.0, 0.03))
            speed = 0.5 * (lo + hi) + float(rng.normal(0.0, 0.5))
        else:  # roundabout
            kind = "CTRA"
            radius = 15.0 + 3.5 * (i % 2)
            phase = 2.0 * math.pi * i / max(n, 1)
            pos = radius * np.array([math.cos(phase), math.sin(phase)])
            heading = phase + 0.5 * math.pi
            accel = 0.0
            omega = speed / radius
        yield kind, cls, pos, heading, max(speed, 0.0), accel, omega


def perturb_detection(gt: AnnotationBox, spec: NoiseSpec, rng: np.random.Generator, timestamp: float = 0.0) -> DetectionBox:
    """Noisy detection of a ground-truth box; the score falls with the noise magnitude."""
    scales = np.array([spec.position_scale] * 3 + [spec.size_scale] * 3 + [spec.heading_scale]
                      + [spec.velocity_scale] * 2)
    if spec.mode == "gaussian":
        z = rng.standard_normal(9)
    elif spec.mode == "student_t":
        # unit-variance t draws
        z = rng.standard_t(spec.dof, size=9) * math.sqrt((spec.dof - 2.0) / spec.dof)
    else:
        z = rng.standard_normal(9)
    # the score sees the nominal draw: a gross outlier is an error the detector is unaware of
    seen = z * scales
    if spec.mode == "mixture" and rng.random() < spec.outlier_prob:
        z = z * spec.outlier_scale
    noise = z * scales
    obs = gt.box.to_vector()
    noisy = obs + noise[:7]
    noisy[3:6] = np.maximum(noisy[3:6], 0.1) if not spec.is_noiseless else obs[3:6]
    noisy[6] = wrap_angle(noisy[6])
    vel = np.asarray(gt.velocity, dtype=float) + noise[7:]
    if spec.is_noiseless:
        score = 1.0
    else:
        score = 1.0 - float(np.linalg.norm(seen)) / (3.0 * float(np.linalg.norm(scales)))
        score *= 1.0 - spec.score_jitter * rng.random()
        score = min(max(score, spec.score_floor), 1.0)
    return DetectionBox(Box3D.from_vector(noisy), (float(vel[0]), float(vel[1])), float(score),
                        gt.class_id, gt.frame_index, timestamp)


def _false_positive(config: SimConfig, rng: np.random.Generator, frame_index: int, timestamp: float) -> DetectionBox:
    cls = config.classes[int(rng.integers(len(config.classes)))]
    w, l, h = CLASS_SIZES[cls]
    pos = rng.uniform(-config.area, config.area, size=2)
    box = Box3D((pos[0], pos[1], 0.5 * h), (w, l, h), float(rng.uniform(-math.pi, math.pi)))
    score = float(rng.uniform(config.noise.score_floor, 0.4))
    return DetectionBox(box, (0.0, 0.0), score, cls, frame_index, timestamp)


def generate_scenario(config: SimConfig, seed: int = 0) -> Scenario:
    config.validate()
    rng = np.random.Generator(np.random.PCG64(seed))
    T = config.n_frames
    objects = []
    for iid, (kind, cls, pos, heading, speed, accel, omega) in enumerate(_spawn(config, rng)):
        model = MotionModel(kind, beta=config.beta)
        nominal = np.array(CLASS_SIZES[cls])
        size = nominal * rng.uniform(0.9, 1.1, size=3)
        if cls == 1:
            # pedestrians wander slowly
            speed = min(speed, 1.5)
        x = _initial_state(model, [pos[0], pos[1], 0.5 * size[2]], size, heading, speed, accel, omega)
        if config.random_lifetimes and T > 1:
            start = int(rng.integers(0, max(T // 3, 1)))
            stop = int(rng.integers(max(start + T // 2, start + 1), T + 1))
        else:
            start, stop = 0, T
        states = {}
        for k in range(start, stop):
            if k > start:
                x = model.f(x, config.period)
            states[k] = x.copy()
        objects.append((iid, kind, cls, model, states))

    frames = []
    mask = {}
    truth = {}
    for iid, kind, cls, model, states in objects:
        truth[iid] = (kind, states)
    for k in range(T):
        ts = round(k * config.period, 9)
        gt = []
        for iid, kind, cls, model, states in objects:
            if k not in states:
                continue
            x = states[k]
            v = model.velocity(x)
            gt.append(AnnotationBox(Box3D.from_vector(model.h(x)), iid, cls, k, (float(v[0]), float(v[1]))))
        dets = []
        for a in gt:
            if rng.random() < config.noise.drop_prob:
                continue
            dets.append(perturb_detection(a, config.noise, rng, ts))
        n_fp = int(rng.poisson(config.noise.fp_rate)) if config.noise.fp_rate > 0 else 0
        dets.extend(_false_positive(config, rng, k, ts) for _ in range(n_fp))
        for a in gt:
            mask[(a.instance_id, k)] = bool(rng.random() < config.annotation_coverage)
        frames.append(Frame(ts, gt, dets))
    return Scenario(frames, mask, seed, {"generator": config.to_dict()}, truth)
