"""Fixed-length trajectory extraction and multiscale pyramid encoding."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Sequence

import numpy as np

from .tracks import (
    NormBox,
    ObjectTrack,
    TrackError,
    TrackKind,
    activation_points,
    classify_track,
    frame_indices,
    normalized_coords,
)
from .util import spawn_rng


class TrajectoryLabel(Enum):
    ACTIVE = "active"
    PASSIVE = "passive"
    UNLABELED = "unlabeled"


@dataclass(frozen=True)
class Trajectory:
    """A window of h normalized boxes over consecutive frames of one track."""

    boxes: tuple[NormBox, ...]
    label: TrajectoryLabel
    source_track_id: str
    end_frame_index: int
    object_class: str
    subject_id: str

    def __post_init__(self):
        if len(self.boxes) < 2:
            raise TrackError(f"trajectory needs >= 2 boxes, got {len(self.boxes)}")

    @property
    def h(self) -> int:
        return len(self.boxes)

    def as_array(self) -> np.ndarray:
        return np.array(
            [[b.x1, b.y1, b.x2, b.y2] for b in self.boxes], dtype=np.float64
        )


@dataclass(frozen=True)
class PyramidEncoding:
    """Coarse-to-fine segment averages of a variable-length box sequence."""

    levels: int
    boxes: tuple[NormBox, ...]

    def __post_init__(self):
        if self.levels < 1:
            raise ValueError(f"levels must be >= 1, got {self.levels}")
        expect = 2**self.levels - 1
        if len(self.boxes) != expect:
            raise ValueError(
                f"pyramid with {self.levels} levels must hold {expect} boxes, "
                f"got {len(self.boxes)}"
            )

    def as_array(self) -> np.ndarray:
        return np.array(
            [[b.x1, b.y1, b.x2, b.y2] for b in self.boxes], dtype=np.float64
        )


def _boxes_from_coords(coords: np.ndarray) -> tuple[NormBox, ...]:
    return tuple(NormBox(*row) for row in coords.tolist())


def _require_dense(track: ObjectTrack) -> None:
    idx = frame_indices(track)
    if len(idx) > 1 and not np.all(np.diff(idx) == 1):
        raise TrackError(
            f"track {track.track_id!r} has frame gaps; densify it before "
            f"extracting trajectories"
        )


def _window(track: ObjectTrack, coords: np.ndarray, start: int, end: int,
            label: TrajectoryLabel) -> Trajectory:
    return Trajectory(
        boxes=_boxes_from_coords(coords[start : end + 1]),
        label=label,
        source_track_id=track.track_id,
        end_frame_index=track.frames[end].frame_index,
        object_class=track.object_class,
        subject_id=track.subject_id,
    )


def extract_active_at_offset(track: ObjectTrack, h: int, offset: int) -> list[Trajectory]:
    """Windows of h frames ending ``offset`` frames before each activation.

    A window is emitted only when the offset + h frames immediately preceding
    the activation point are all passive, so active trajectories never
    straddle an earlier active segment.
    """
    if h < 2:
        raise ValueError(f"h must be >= 2, got {h}")
    if offset < 0:
        raise ValueError(f"offset must be >= 0, got {offset}")
    _require_dense(track)
    coords = normalized_coords(track)
    flags = [f.active for f in track.frames]
    out = []
    for p in activation_points(track):
        start = p - offset - h
        if start < 0:
            continue
        if any(flags[start:p]):
            continue
        out.append(_window(track, coords, start, p - offset - 1, TrajectoryLabel.ACTIVE))
    return out


def extract_active(track: ObjectTrack, h: int) -> list[Trajectory]:
    """The last h passive frames preceding each activation point."""
    return extract_active_at_offset(track, h, 0)


def extract_passive(track: ObjectTrack, h: int, rng_seed: int) -> Trajectory | None:
    """One uniformly random h-frame window of a passive track, or None if short."""
    if h < 2:
        raise ValueError(f"h must be >= 2, got {h}")
    if classify_track(track) is not TrackKind.PASSIVE:
        raise TrackError(
            f"extract_passive requires a passive track, got {track.track_id!r}"
        )
    if len(track.frames) < h:
        return None
    _require_dense(track)
    rng = spawn_rng(rng_seed)
    start = int(rng.integers(0, len(track.frames) - h + 1))
    coords = normalized_coords(track)
    return _window(track, coords, start, start + h - 1, TrajectoryLabel.PASSIVE)


def sliding_windows(track: ObjectTrack, h: int) -> Iterator[tuple[int, Trajectory]]:
    """Every h-frame window of a densified track, keyed by its end frame index.

    Tracks shorter than h yield nothing.
    """
    if h < 2:
        raise ValueError(f"h must be >= 2, got {h}")
    if len(track.frames) < h:
        return
    _require_dense(track)
    coords = normalized_coords(track)
    for p in range(h - 1, len(track.frames)):
        traj = _window(track, coords, p - h + 1, p, TrajectoryLabel.UNLABELED)
        yield track.frames[p].frame_index, traj


def passive_prefix_before(track: ObjectTrack, position: int) -> int:
    """Length of the maximal all-passive run ending just before ``position``."""
    n = 0
    i = position - 1
    while i >= 0 and not track.frames[i].active:
        n += 1
        i -= 1
    return n


def pyramid_encode_array(coords: np.ndarray, levels: int) -> np.ndarray:
    """Segment-average a (T, 4) box array into 2**levels - 1 rows.

    Level k splits the sequence into 2**(k-1) contiguous segments of
    near-equal length, remainder going to the earlier segments; each segment
    contributes its element-wise mean box. Levels are concatenated coarse to
    fine.
    """
    if levels < 1:
        raise ValueError(f"levels must be >= 1, got {levels}")
    n = len(coords)
    min_len = 2 ** (levels - 1)
    if n < min_len:
        raise ValueError(
            f"sequence of length {n} too short for {levels} pyramid levels "
            f"(needs >= {min_len})"
        )
    rows = []
    for k in range(1, levels + 1):
        segments = 2 ** (k - 1)
        q, r = divmod(n, segments)
        start = 0
        for si in range(segments):
            size = q + 1 if si < r else q
            rows.append(coords[start : start + size].mean(axis=0))
            start += size
    return np.array(rows, dtype=np.float64)


def pyramid_encode(prefix: Sequence[NormBox], levels: int) -> PyramidEncoding:
    coords = np.array([[b.x1, b.y1, b.x2, b.y2] for b in prefix], dtype=np.float64)
    out = pyramid_encode_array(coords, levels)
    return PyramidEncoding(levels, _boxes_from_coords(out))
