"""Line-delimited JSON files for scenarios, detections, tracks and annotations.

Every file starts with one header object::

    {"format": "gkftrack", "version": 1, "kind": ..., "n_frames": N,
     "timestamps": [...], "tool_version": ..., "config": {...}, "meta": {...}}

followed by one record per line::

    {"frame", "timestamp", "class", "x", "y", "z", "w", "l", "h", "yaw",
     "vx", "vy", "score", "id"?, "source"?, "annotated"?}

Units are meters, seconds and radians; yaw is wrapped to [-pi, pi) on write.
``id`` appears in track and annotation records only. Scenario files mix
detection records (``"source": "det"``) and ground-truth records
(``"source": "gt"``, carrying ``"annotated"``).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from . import __version__
from .geometry import Box3D, wrap_angle
from .scenario import AnnotationBox, DetectionBox, Frame, Scenario
from .tracker import TrackOutput

FORMAT = "gkftrack"
VERSION = 1
KINDS = ("scenario", "detections", "tracks", "annotations")
BOX_FIELDS = ("x", "y", "z", "w", "l", "h", "yaw")


class FormatError(ValueError):
    def __init__(self, path, line: int, field_name: str, message: str):
        super().__init__(f"{path}:{line}: field '{field_name}': {message}")
        self.path = str(path)
        self.line = line
        self.field = field_name


@dataclass
class SequenceFile:
    kind: str
    timestamps: list[float]
    records: list[dict] = field(default_factory=list)
    config: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def n_frames(self) -> int:
        return len(self.timestamps)


# ---------------------------------------------------------------- records
def _box_record(frame: int, ts: float, cls: int, box: Box3D, vel, score: float) -> dict:
    return {
        "frame": int(frame), "timestamp": float(ts), "class": int(cls),
        "x": float(box.center[0]), "y": float(box.center[1]), "z": float(box.center[2]),
        "w": float(box.size[0]), "l": float(box.size[1]), "h": float(box.size[2]),
        "yaw": float(wrap_angle(box.yaw)), "vx": float(vel[0]), "vy": float(vel[1]), "score": float(score),
    }


def detection_record(d: DetectionBox) -> dict:
    return _box_record(d.frame_index, d.timestamp, d.class_id, d.box, d.velocity, d.score)


def annotation_record(a: AnnotationBox, ts: float) -> dict:
    rec = _box_record(a.frame_index, ts, a.class_id, a.box, a.velocity, 1.0)
    rec["id"] = int(a.instance_id)
    return rec


def track_record(o: TrackOutput) -> dict:
    rec = _box_record(o.frame_index, o.timestamp, o.class_id, o.box, o.velocity, o.score)
    rec["id"] = int(o.track_id)
    return rec


def record_box(rec: dict) -> Box3D:
    return Box3D((rec["x"], rec["y"], rec["z"]), (rec["w"], rec["l"], rec["h"]), rec["yaw"])


def record_detection(rec: dict) -> DetectionBox:
    return DetectionBox(record_box(rec), (rec["vx"], rec["vy"]), rec["score"], rec["class"], rec["frame"], rec["timestamp"])


def record_annotation(rec: dict) -> AnnotationBox:
    return AnnotationBox(record_box(rec), rec["id"], rec["class"], rec["frame"], (rec["vx"], rec["vy"]))


def record_track(rec: dict) -> TrackOutput:
    return TrackOutput(rec["frame"], rec["timestamp"], rec["id"], rec["class"], record_box(rec),
                       (rec["vx"], rec["vy"]), rec["score"])


# ----------------------------------------------------------------- writing
def _dumps(obj: dict) -> str:
    return json.dumps(obj, separators=(",", ":"), allow_nan=False)


def write_file(path, seq: SequenceFile) -> None:
    if seq.kind not in KINDS:
        raise ValueError(f"unknown file kind {seq.kind!r}")
    header = {
        "format": FORMAT, "version": VERSION, "kind": seq.kind, "n_frames": seq.n_frames,
        "timestamps": [float(t) for t in seq.timestamps], "tool_version": __version__,
        "config": seq.config, "meta": seq.meta,
    }
    lines = [_dumps(header)] + [_dumps(r) for r in seq.records]
    Path(path).write_text("\n".join(lines) + "\n")


def scenario_file(scenario: Scenario, config: dict | None = None) -> SequenceFile:
    recs = []
    for k, f in enumerate(scenario.frames):
        for a in f.gt:
            r = annotation_record(a, f.timestamp)
            r["source"] = "gt"
            r["annotated"] = scenario.annotated(a.instance_id, k)
            recs.append(r)
        for d in f.detections:
            r = detection_record(d)
            r["source"] = "det"
            recs.append(r)
    meta = dict(scenario.meta)
    meta["seed"] = scenario.seed
    return SequenceFile("scenario", [f.timestamp for f in scenario.frames], recs, config or {}, meta)


def write_scenario(path, scenario: Scenario, config: dict | None = None) -> None:
    write_file(path, scenario_file(scenario, config))


def write_tracks(path, outputs: list[list[TrackOutput]], timestamps: list[float], config: dict | None = None,
                 meta: dict | None = None) -> None:
    recs = [track_record(o) for frame in outputs for o in frame]
    write_file(path, SequenceFile("tracks", list(timestamps), recs, config or {}, meta or {}))


def write_detections(path, frames: list[tuple[float, list[DetectionBox]]], config: dict | None = None) -> None:
    recs = [detection_record(d) for _, dets in frames for d in dets]
    write_file(path, SequenceFile("detections", [t for t, _ in frames], recs, config or {}, {}))


# ----------------------------------------------------------------- reading
_NUMERIC = ("timestamp",) + BOX_FIELDS + ("vx", "vy", "score")


def _check_record(path, line: int, rec, kind: str, n_frames: int) -> dict:
    if not isinstance(rec, dict):
        raise FormatError(path, line, "-", "record is not a JSON object")
    for name in ("frame", "class"):
        v = rec.get(name)
        if isinstance(v, bool) or not isinstance(v, int):
            raise FormatError(path, line, name, "missing or not an integer")
    for name in _NUMERIC:
        v = rec.get(name)
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise FormatError(path, line, name, "missing or not a finite number")
        rec[name] = float(v)
    if not 0 <= rec["frame"] < n_frames:
        raise FormatError(path, line, "frame", f"{rec['frame']} outside [0, {n_frames})")
    for name in ("w", "l", "h"):
        if rec[name] <= 0:
            raise FormatError(path, line, name, f"size must be positive, got {rec[name]}")
    if not 0.0 <= rec["score"] <= 1.0:
        raise FormatError(path, line, "score", f"{rec['score']} outside [0, 1]")
    needs_id = kind in ("tracks", "annotations") or (kind == "scenario" and rec.get("source") == "gt")
    if needs_id:
        v = rec.get("id")
        if isinstance(v, bool) or not isinstance(v, int):
            raise FormatError(path, line, "id", "missing or not an integer")
    elif "id" in rec and kind == "detections":
        raise FormatError(path, line, "id", "detections carry no id")
    if kind == "scenario":
        if rec.get("source") not in ("gt", "det"):
            raise FormatError(path, line, "source", "must be 'gt' or 'det'")
        if rec["source"] == "gt" and not isinstance(rec.get("annotated"), bool):
            raise FormatError(path, line, "annotated", "missing or not a boolean")
    return rec


def read_file(path, expected_kind: str | Iterable[str] | None = None) -> SequenceFile:
    text = Path(path).read_text()
    lines = text.splitlines()
    if not lines:
        raise FormatError(path, 1, "format", "empty file (header missing)")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise FormatError(path, 1, "format", f"invalid JSON: {e.msg}") from None
    if not isinstance(header, dict) or header.get("format") != FORMAT:
        raise FormatError(path, 1, "format", f"not a {FORMAT} file")
    if header.get("version") != VERSION:
        raise FormatError(path, 1, "version", f"unsupported version {header.get('version')!r}")
    kind = header.get("kind")
    if kind not in KINDS:
        raise FormatError(path, 1, "kind", f"unknown kind {kind!r}")
    if expected_kind is not None:
        allowed = (expected_kind,) if isinstance(expected_kind, str) else tuple(expected_kind)
        if kind not in allowed:
            raise FormatError(path, 1, "kind", f"expected {'/'.join(allowed)}, got {kind}")
    ts = header.get("timestamps")
    if not isinstance(ts, list) or len(ts) != header.get("n_frames"):
        raise FormatError(path, 1, "timestamps", "must list one timestamp per frame")
    if any(b <= a for a, b in zip(ts, ts[1:])):
        raise FormatError(path, 1, "timestamps", "must be strictly increasing")
    recs = []
    for i, line in enumerate(lines[1:], start=2):
        if not line.strip():
            raise FormatError(path, i, "-", "blank line")
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as e:
            raise FormatError(path, i, "-", f"invalid JSON: {e.msg}") from None
        recs.append(_check_record(path, i, rec, kind, len(ts)))
    return SequenceFile(kind, [float(t) for t in ts], recs, header.get("config", {}), header.get("meta", {}))


def to_scenario(seq: SequenceFile) -> Scenario:
    frames = [Frame(t, [], []) for t in seq.timestamps]
    mask = {}
    for r in seq.records:
        if seq.kind == "scenario" and r["source"] == "gt" or seq.kind == "annotations":
            a = record_annotation(r)
            frames[a.frame_index].gt.append(a)
            mask[(a.instance_id, a.frame_index)] = bool(r.get("annotated", True))
        else:
            d = record_detection(r)
            frames[d.frame_index].detections.append(d)
    meta = dict(seq.meta)
    seed = meta.pop("seed", 0)
    return Scenario(frames, mask, seed, meta)


def read_scenario(path) -> Scenario:
    """Scenario, detection or annotation file as a Scenario (missing parts left empty)."""
    return to_scenario(read_file(path, ("scenario", "detections", "annotations")))


def read_tracks(path) -> tuple[list[list[TrackOutput]], list[float]]:
    seq = read_file(path, "tracks")
    out: list[list[TrackOutput]] = [[] for _ in seq.timestamps]
    for r in seq.records:
        out[r["frame"]].append(record_track(r))
    return out, seq.timestamps
