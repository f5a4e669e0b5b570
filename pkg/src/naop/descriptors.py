"""Trajectory descriptors built from box centers, areas, and their differences."""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .trajectories import Trajectory


class DescriptorVariant(str, Enum):
    FULL = "full"
    RELATIVE = "relative"
    ABSOLUTE = "absolute"
    ABSOLUTE_DIFF = "absolute_diff"
    ABSOLUTE_SCALE = "absolute_scale"


def descriptor_dim(variant: DescriptorVariant, h: int) -> int:
    if h < 2:
        raise ValueError(f"h must be >= 2, got {h}")
    return {
        DescriptorVariant.FULL: 6 * h - 3,
        DescriptorVariant.RELATIVE: 2 * (h - 1),
        DescriptorVariant.ABSOLUTE: 2 * h,
        DescriptorVariant.ABSOLUTE_DIFF: 4 * h - 2,
        DescriptorVariant.ABSOLUTE_SCALE: 3 * h,
    }[variant]


@dataclass(frozen=True)
class FeatureVector:
    values: np.ndarray
    variant: DescriptorVariant
    h: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        expect = descriptor_dim(self.variant, self.h)
        if values.ndim != 1 or len(values) != expect:
            raise ValueError(
                f"{self.variant.value} descriptor for h={self.h} must have "
                f"{expect} entries, got shape {values.shape}"
            )
        if not np.all(np.isfinite(values)):
            raise ValueError("descriptor contains non-finite values")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __len__(self) -> int:
        return len(self.values)


def _centers_areas(coords: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    xc = (coords[:, 0] + coords[:, 2]) / 2.0
    yc = (coords[:, 1] + coords[:, 3]) / 2.0
    s = (coords[:, 2] - coords[:, 0]) * (coords[:, 3] - coords[:, 1])
    return xc, yc, s


def describe_boxes(coords: np.ndarray, variant: DescriptorVariant) -> np.ndarray:
    """Descriptor of one (h, 4) normalized box sequence as a flat float array.

    Block order is frozen for model portability: interleaved centers
    (xc_1, yc_1, ..., xc_h, yc_h), then areas, then interleaved center
    differences, then area differences, subset per variant.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if coords.ndim != 2 or coords.shape[1] != 4 or len(coords) < 2:
        raise ValueError(f"expected (h>=2, 4) box array, got shape {coords.shape}")
    xc, yc, s = _centers_areas(coords)
    pos = np.column_stack([xc, yc]).ravel()
    if variant is DescriptorVariant.ABSOLUTE:
        return pos
    if variant is DescriptorVariant.ABSOLUTE_SCALE:
        return np.concatenate([pos, s])
    dxy = np.column_stack([np.diff(xc), np.diff(yc)]).ravel()
    if variant is DescriptorVariant.ABSOLUTE_DIFF:
        return np.concatenate([pos, dxy])
    if variant is DescriptorVariant.RELATIVE:
        total = float(np.sum(np.hypot(np.diff(xc), np.diff(yc))))
        if total == 0.0:
            return np.zeros_like(dxy)
        return dxy / total
    ds = np.diff(s)
    return np.concatenate([pos, s, dxy, ds])


def describe(trajectory: Trajectory, variant: DescriptorVariant) -> FeatureVector:
    values = describe_boxes(trajectory.as_array(), variant)
    return FeatureVector(values, variant, trajectory.h)


def describe_matrix(trajectories, variant: DescriptorVariant) -> np.ndarray:
    """Stack descriptors of equal-length trajectories into an (n, d) matrix."""
    trajectories = list(trajectories)
    if not trajectories:
        h = 2
        return np.empty((0, descriptor_dim(variant, h)), dtype=np.float64)
    h = trajectories[0].h
    for t in trajectories:
        if t.h != h:
            raise ValueError(f"mixed trajectory lengths: {t.h} vs {h}")
    return np.stack([describe_boxes(t.as_array(), variant) for t in trajectories])


def describe_windows(coords: np.ndarray, h: int, variant: DescriptorVariant) -> np.ndarray:
    """Descriptors of every h-frame window of a (T, 4) consecutive-frame track.

    Row i describes the window ending at position i + h - 1; output shape is
    (T - h + 1, d). Equivalent to calling describe on each window, but
    vectorized for the sliding-window prediction path.
    """
    coords = np.asarray(coords, dtype=np.float64)
    if h < 2:
        raise ValueError(f"h must be >= 2, got {h}")
    if coords.ndim != 2 or coords.shape[1] != 4:
        raise ValueError(f"expected (T, 4) box array, got shape {coords.shape}")
    n = len(coords)
    if n < h:
        return np.empty((0, descriptor_dim(variant, h)), dtype=np.float64)
    xc, yc, s = _centers_areas(coords)
    XC = sliding_window_view(xc, h)
    YC = sliding_window_view(yc, h)
    pos = np.stack([XC, YC], axis=2).reshape(n - h + 1, 2 * h)
    if variant is DescriptorVariant.ABSOLUTE:
        return np.ascontiguousarray(pos)
    if variant is DescriptorVariant.ABSOLUTE_SCALE:
        S = sliding_window_view(s, h)
        return np.ascontiguousarray(np.concatenate([pos, S], axis=1))
    dxc = np.diff(xc)
    dyc = np.diff(yc)
    DXC = sliding_window_view(dxc, h - 1)
    DYC = sliding_window_view(dyc, h - 1)
    dxy = np.stack([DXC, DYC], axis=2).reshape(n - h + 1, 2 * (h - 1))
    if variant is DescriptorVariant.ABSOLUTE_DIFF:
        return np.ascontiguousarray(np.concatenate([pos, dxy], axis=1))
    if variant is DescriptorVariant.RELATIVE:
        mags = np.hypot(dxc, dyc)
        totals = sliding_window_view(mags, h - 1).sum(axis=1)
        out = np.zeros_like(dxy)
        nz = totals > 0
        out[nz] = dxy[nz] / totals[nz, None]
        return out
    S = sliding_window_view(s, h)
    ds = np.diff(s)
    DS = sliding_window_view(ds, h - 1)
    return np.ascontiguousarray(np.concatenate([pos, S, dxy, DS], axis=1))


def motion_magnitude_boxes(coords: np.ndarray) -> float:
    xc, yc, _ = _centers_areas(np.asarray(coords, dtype=np.float64))
    return float(np.sum(np.hypot(np.diff(xc), np.diff(yc))))


def motion_magnitude(trajectory: Trajectory) -> float:
    """Total center displacement: sum of per-step displacement magnitudes."""
    return motion_magnitude_boxes(trajectory.as_array())


def motion_magnitude_windows(coords: np.ndarray, h: int) -> np.ndarray:
    """motion_magnitude of every h-frame window of a (T, 4) track array."""
    coords = np.asarray(coords, dtype=np.float64)
    if h < 2:
        raise ValueError(f"h must be >= 2, got {h}")
    if len(coords) < h:
        return np.empty(0, dtype=np.float64)
    xc, yc, _ = _centers_areas(coords)
    mags = np.hypot(np.diff(xc), np.diff(yc))
    return sliding_window_view(mags, h - 1).sum(axis=1)
