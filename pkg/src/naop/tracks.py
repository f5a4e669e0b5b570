"""Object-track data model: parsing, normalization, densification, splits.

Tracks are stored in pixel coordinates and normalized lazily, so frame
geometry never corrupts stored data. All types are immutable after
construction and safe to share across threads.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from enum import Enum
from typing import IO, Iterable

import numpy as np


class TrackError(ValueError):
    """Track data violates a structural invariant."""


class TrackFormatError(TrackError):
    """Malformed track file; carries the offending line number when known."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True, slots=True)
class PixelBox:
    """Axis-aligned box in pixels, top-left (x1, y1) and bottom-right (x2, y2)."""

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise TrackError(f"box coordinates must be finite, got {coords}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise TrackError(f"degenerate box {coords}: need x1 < x2 and y1 < y2")

    @property
    def width(self) -> float:
        return self.x2 - self.x1

    @property
    def height(self) -> float:
        return self.y2 - self.y1

    @property
    def area(self) -> float:
        return self.width * self.height

    @property
    def center(self) -> tuple[float, float]:
        return (self.x1 + self.x2) / 2.0, (self.y1 + self.y2) / 2.0


# Slack for float round-off when a box touches the frame border exactly.
_EDGE_EPS = 1e-9


@dataclass(frozen=True, slots=True)
class NormBox:
    """Box normalized by the frame size and centered on the frame midpoint.

    Every coordinate lies in [-0.5, 0.5]; the frame center is (0, 0).
    """

    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        coords = (self.x1, self.y1, self.x2, self.y2)
        if not all(math.isfinite(c) for c in coords):
            raise TrackError(f"normalized coordinates must be finite, got {coords}")
        if not all(-0.5 - _EDGE_EPS <= c <= 0.5 + _EDGE_EPS for c in coords):
            raise TrackError(f"normalized coordinates outside [-0.5, 0.5]: {coords}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise TrackError(f"degenerate normalized box {coords}")

    @property
    def xc(self) -> float:
        return (self.x1 + self.x2) / 2.0

    @property
    def yc(self) -> float:
        return (self.y1 + self.y2) / 2.0

    @property
    def s(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)


@dataclass(frozen=True, slots=True)
class TrackFrame:
    frame_index: int
    box: PixelBox
    active: bool
    annotated: bool = True

    def __post_init__(self):
        if self.frame_index < 0:
            raise TrackError(f"frame_index must be >= 0, got {self.frame_index}")


class TrackKind(Enum):
    PASSIVE = "passive"
    MIXED = "mixed"
    ACTIVE_ONLY = "active_only"


@dataclass(frozen=True)
class ObjectTrack:
    """One object instance: a sequence of per-frame boxes with activity flags."""

    track_id: str
    subject_id: str
    video_id: str
    object_class: str
    frame_width: int
    frame_height: int
    frames: tuple[TrackFrame, ...]

    def __post_init__(self):
        if self.frame_width <= 0 or self.frame_height <= 0:
            raise TrackError(
                f"track {self.track_id!r}: frame size must be positive, "
                f"got {self.frame_width}x{self.frame_height}"
            )
        if not self.frames:
            raise TrackError(f"track {self.track_id!r} has no frames")
        prev = -1
        for fr in self.frames:
            if fr.frame_index <= prev:
                raise TrackError(
                    f"track {self.track_id!r}: frame indices not strictly "
                    f"ascending at {fr.frame_index}"
                )
            prev = fr.frame_index
            b = fr.box
            if (
                b.x1 < -_EDGE_EPS
                or b.y1 < -_EDGE_EPS
                or b.x2 > self.frame_width + _EDGE_EPS
                or b.y2 > self.frame_height + _EDGE_EPS
            ):
                raise TrackError(
                    f"track {self.track_id!r}: box {(b.x1, b.y1, b.x2, b.y2)} "
                    f"outside {self.frame_width}x{self.frame_height} frame "
                    f"at frame {fr.frame_index}"
                )

    def __len__(self) -> int:
        return len(self.frames)


@dataclass(frozen=True)
class Dataset:
    tracks: tuple[ObjectTrack, ...]
    frame_rate: float = 30.0

    def __post_init__(self):
        object.__setattr__(self, "tracks", tuple(self.tracks))
        seen = set()
        for t in self.tracks:
            if t.track_id in seen:
                raise TrackError(f"duplicate track_id {t.track_id!r}")
            seen.add(t.track_id)

    def subjects(self) -> list[str]:
        return sorted({t.subject_id for t in self.tracks})

    def classes(self) -> list[str]:
        return sorted({t.object_class for t in self.tracks})

    def __len__(self) -> int:
        return len(self.tracks)


def normalize_box(box: PixelBox, frame_width: float, frame_height: float) -> NormBox:
    """Scale a pixel box by the frame size and center it on the frame midpoint."""
    if frame_width <= 0 or frame_height <= 0:
        raise TrackError(
            f"frame dimensions must be positive, got {frame_width}x{frame_height}"
        )
    return NormBox(
        box.x1 / frame_width - 0.5,
        box.y1 / frame_height - 0.5,
        box.x2 / frame_width - 0.5,
        box.y2 / frame_height - 0.5,
    )


def denormalize_box(box: NormBox, frame_width: float, frame_height: float) -> PixelBox:
    if frame_width <= 0 or frame_height <= 0:
        raise TrackError(
            f"frame dimensions must be positive, got {frame_width}x{frame_height}"
        )
    return PixelBox(
        (box.x1 + 0.5) * frame_width,
        (box.y1 + 0.5) * frame_height,
        (box.x2 + 0.5) * frame_width,
        (box.y2 + 0.5) * frame_height,
    )


def normalized_coords(track: ObjectTrack) -> np.ndarray:
    """Per-frame normalized box corners as a (T, 4) float64 array."""
    arr = np.array(
        [[f.box.x1, f.box.y1, f.box.x2, f.box.y2] for f in track.frames],
        dtype=np.float64,
    )
    arr[:, 0] = arr[:, 0] / track.frame_width - 0.5
    arr[:, 2] = arr[:, 2] / track.frame_width - 0.5
    arr[:, 1] = arr[:, 1] / track.frame_height - 0.5
    arr[:, 3] = arr[:, 3] / track.frame_height - 0.5
    return arr


def frame_indices(track: ObjectTrack) -> np.ndarray:
    return np.array([f.frame_index for f in track.frames], dtype=np.int64)


def classify_track(track: ObjectTrack) -> TrackKind:
    flags = [f.active for f in track.frames]
    if not any(flags):
        return TrackKind.PASSIVE
    if all(flags):
        return TrackKind.ACTIVE_ONLY
    return TrackKind.MIXED


def activation_points(track: ObjectTrack) -> list[int]:
    """Positions where the flag flips passive -> active.

    Positions index into ``track.frames``. An active first frame is not an
    activation point: there is no preceding passive evidence.
    """
    points = []
    for i in range(1, len(track.frames)):
        if track.frames[i].active and not track.frames[i - 1].active:
            points.append(i)
    return points


def densify(track: ObjectTrack) -> ObjectTrack:
    """Fill every integer frame index between annotations by interpolation.

    Inserted boxes interpolate each corner linearly in pixel space between the
    surrounding annotations; inserted active flags carry forward the preceding
    annotation's flag; inserted frames are marked not annotated. Original
    frames pass through unchanged, so the operation is idempotent.
    """
    out: list[TrackFrame] = []
    frames = track.frames
    for i, fr in enumerate(frames[:-1]):
        out.append(fr)
        nxt = frames[i + 1]
        gap = nxt.frame_index - fr.frame_index
        if gap <= 1:
            continue
        a, b = fr.box, nxt.box
        for k in range(1, gap):
            t = k / gap
            box = PixelBox(
                a.x1 + (b.x1 - a.x1) * t,
                a.y1 + (b.y1 - a.y1) * t,
                a.x2 + (b.x2 - a.x2) * t,
                a.y2 + (b.y2 - a.y2) * t,
            )
            out.append(
                TrackFrame(fr.frame_index + k, box, active=fr.active, annotated=False)
            )
    out.append(frames[-1])
    return ObjectTrack(
        track.track_id,
        track.subject_id,
        track.video_id,
        track.object_class,
        track.frame_width,
        track.frame_height,
        tuple(out),
    )


def densify_dataset(dataset: Dataset) -> Dataset:
    return Dataset(tuple(densify(t) for t in dataset.tracks), dataset.frame_rate)


def is_dense(track: ObjectTrack) -> bool:
    idx = frame_indices(track)
    return bool(np.all(np.diff(idx) == 1)) if len(idx) > 1 else True


def split_by_subject(dataset: Dataset, held_out_subject: str) -> tuple[Dataset, Dataset]:
    """Partition a dataset into (train, test) by subject id."""
    if held_out_subject not in {t.subject_id for t in dataset.tracks}:
        raise TrackError(f"unknown subject id {held_out_subject!r}")
    test = tuple(t for t in dataset.tracks if t.subject_id == held_out_subject)
    train = tuple(t for t in dataset.tracks if t.subject_id != held_out_subject)
    if not train:
        warnings.warn(
            f"holding out {held_out_subject!r} leaves an empty training set",
            stacklevel=2,
        )
    return Dataset(train, dataset.frame_rate), Dataset(test, dataset.frame_rate)


_FRAME_KEYS = ("f", "x1", "y1", "x2", "y2", "active", "annotated")
_TRACK_KEYS = (
    "track_id",
    "subject_id",
    "video_id",
    "class",
    "frame_width",
    "frame_height",
    "frames",
)


def _parse_track_line(obj: dict, line_no: int) -> ObjectTrack:
    for key in _TRACK_KEYS:
        if key not in obj:
            raise TrackFormatError(f"missing key {key!r}", line_no)
    raw_frames = obj["frames"]
    if not isinstance(raw_frames, list) or not raw_frames:
        raise TrackFormatError("frames must be a nonempty list", line_no)
    frames = []
    for rf in raw_frames:
        for key in _FRAME_KEYS:
            if key not in rf:
                raise TrackFormatError(f"frame missing key {key!r}", line_no)
        frames.append(
            TrackFrame(
                int(rf["f"]),
                PixelBox(float(rf["x1"]), float(rf["y1"]), float(rf["x2"]), float(rf["y2"])),
                bool(rf["active"]),
                bool(rf["annotated"]),
            )
        )
    return ObjectTrack(
        str(obj["track_id"]),
        str(obj["subject_id"]),
        str(obj["video_id"]),
        str(obj["class"]),
        int(obj["frame_width"]),
        int(obj["frame_height"]),
        tuple(frames),
    )


def parse_tracks(stream: IO, frame_rate: float = 30.0) -> Dataset:
    """Parse a JSON-Lines track stream (one track per line).

    Raises TrackFormatError naming the offending line for malformed JSON or
    any invariant violation; duplicate track ids are rejected.
    """
    tracks: list[ObjectTrack] = []
    seen: set[str] = set()
    for line_no, raw in enumerate(stream, start=1):
        if isinstance(raw, bytes):
            raw = raw.decode("utf-8")
        line = raw.strip()
        if not line:
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise TrackFormatError(f"invalid JSON ({exc.msg})", line_no) from exc
        try:
            track = _parse_track_line(obj, line_no)
        except TrackFormatError:
            raise
        except TrackError as exc:
            raise TrackFormatError(str(exc), line_no) from exc
        except (TypeError, ValueError) as exc:
            raise TrackFormatError(f"bad field value: {exc}", line_no) from exc
        if track.track_id in seen:
            raise TrackFormatError(f"duplicate track_id {track.track_id!r}", line_no)
        seen.add(track.track_id)
        tracks.append(track)
    return Dataset(tuple(tracks), frame_rate)


def serialize_tracks(dataset: Dataset, stream: IO) -> None:
    """Write a dataset as JSON Lines; round-trips losslessly with parse_tracks."""
    for t in dataset.tracks:
        obj = {
            "track_id": t.track_id,
            "subject_id": t.subject_id,
            "video_id": t.video_id,
            "class": t.object_class,
            "frame_width": t.frame_width,
            "frame_height": t.frame_height,
            "frames": [
                {
                    "f": f.frame_index,
                    "x1": f.box.x1,
                    "y1": f.box.y1,
                    "x2": f.box.x2,
                    "y2": f.box.y2,
                    "active": f.active,
                    "annotated": f.annotated,
                }
                for f in t.frames
            ],
        }
        stream.write(json.dumps(obj, separators=(",", ":")) + "\n")


def load_tracks(path, frame_rate: float = 30.0) -> Dataset:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_tracks(fh, frame_rate)


def save_tracks(dataset: Dataset, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        serialize_tracks(dataset, fh)
