"""Detections, annotations and whole sequences."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import Box3D


@dataclass(frozen=True)
class DetectionBox:
    box: Box3D
    velocity: tuple = (0.0, 0.0)
    score: float = 1.0
    class_id: int = 0
    frame_index: int = 0
    timestamp: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.score <= 1.0:
            raise ValueError(f"detection score {self.score} outside [0, 1]")

    def obs(self) -> np.ndarray:
        return self.box.to_vector()


@dataclass(frozen=True)
class AnnotationBox:
    box: Box3D
    instance_id: int
    class_id: int = 0
    frame_index: int = 0
    velocity: tuple = (0.0, 0.0)


@dataclass
class Frame:
    timestamp: float
    gt: list[AnnotationBox] = field(default_factory=list)
    detections: list[DetectionBox] = field(default_factory=list)


@dataclass
class Scenario:
    frames: list[Frame]
    annotation_mask: dict = field(default_factory=dict)  # (instance_id, frame_index) -> bool
    seed: int = 0
    meta: dict = field(default_factory=dict)
    # instance_id -> (motion kind, {frame_index: state vector}); simulator output only
    truth_states: dict = field(default_factory=dict)

    def detection_frames(self) -> list[tuple[float, list[DetectionBox]]]:
        return [(f.timestamp, f.detections) for f in self.frames]

    def annotated(self, instance_id: int, frame_index: int) -> bool:
        return self.annotation_mask.get((instance_id, frame_index), True)

    def visible_annotations(self, frame_index: int) -> list[AnnotationBox]:
        return [a for a in self.frames[frame_index].gt if self.annotated(a.instance_id, frame_index)]

    def coverage(self) -> float:
        if not self.annotation_mask:
            return 1.0
        return float(np.mean(list(self.annotation_mask.values())))
