"""False-positive reduction and clean-up of predicted masks.

Morphology uses a discretised disk: every offset whose centre lies within
``radius`` of the element centre.  Pixels outside the grid are background.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

from .masks import MaskSlice, MaskVolume, VoxelSpacing, connected_components

__all__ = [
    "StructuringElement",
    "ProbabilityVolume",
    "IntensityHistogram",
    "AdaptiveThreshold",
    "DEFAULT_BINS",
    "DEFAULT_PEAKS",
    "FALLBACK_THRESHOLD",
    "dilate",
    "erode",
    "remove_small_regions",
    "intensity_histogram",
    "histogram_peaks",
    "threshold_from_histogram",
    "adaptive_threshold",
    "hysteresis_threshold",
    "apply_threshold",
    "map_slices",
]

DEFAULT_BINS = 256
DEFAULT_PEAKS = 6
FALLBACK_THRESHOLD = 0.5


@dataclass(frozen=True, eq=False)
class StructuringElement:
    radius: float
    spacing: tuple[float, float] = (1.0, 1.0)
    offsets: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.radius < 0:
            raise ValueError("radius must be non-negative")
        sx, sy = self.spacing
        rx, ry = int(math.floor(self.radius / sx)), int(math.floor(self.radius / sy))
        dy, dx = np.mgrid[-ry:ry + 1, -rx:rx + 1]
        inside = (dx * sx) ** 2 + (dy * sy) ** 2 <= self.radius ** 2
        offsets = np.column_stack([dy[inside], dx[inside]])
        offsets.flags.writeable = False
        object.__setattr__(self, "offsets", offsets)

    @classmethod
    def circular(cls, radius: float, spacing=(1.0, 1.0)) -> "StructuringElement":
        return cls(radius, tuple(spacing))

    @property
    def reach(self) -> int:
        return int(np.abs(self.offsets).max()) if len(self.offsets) else 0


@dataclass(frozen=True, eq=False)
class ProbabilityVolume:
    """Per-voxel probabilities, shape ``(depth, height, width)``."""

    values: np.ndarray
    spacing: VoxelSpacing = field(default_factory=VoxelSpacing)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float32, copy=True)
        if vals.ndim != 3:
            raise ValueError(f"probability volume must be 3D, got shape {vals.shape}")
        if not np.isfinite(vals).all() or vals.min(initial=0) < 0 or vals.max(initial=0) > 1:
            raise ValueError("probabilities must be finite and lie in [0, 1]")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        if not isinstance(self.spacing, VoxelSpacing):
            object.__setattr__(self, "spacing", VoxelSpacing(*self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        d, h, w = self.values.shape
        return (w, h, d)

    def __eq__(self, other):
        if not isinstance(other, ProbabilityVolume):
            return NotImplemented
        return self.spacing == other.spacing and np.array_equal(self.values, other.values)


@dataclass(frozen=True)
class IntensityHistogram:
    counts: np.ndarray
    centers: np.ndarray
    edges: np.ndarray | None = None

    @property
    def bin_count(self) -> int:
        return len(self.counts)


@dataclass(frozen=True)
class AdaptiveThreshold:
    value: float
    fallback: bool
    peak_intensities: tuple[float, ...]


def _grid(mask) -> tuple[np.ndarray, MaskSlice | None]:
    if isinstance(mask, MaskSlice):
        return mask.voxels, mask
    return np.asarray(mask, dtype=bool), None


def _wrap(arr: np.ndarray, like: MaskSlice | None):
    if like is None:
        return arr
    return MaskSlice(arr, z_index=like.z_index, spacing=like.spacing)


def _sweep(fg: np.ndarray, se: StructuringElement, combine, border: bool) -> np.ndarray:
    r = se.reach
    padded = np.pad(fg, r, constant_values=border)
    h, w = fg.shape
    out = np.full(fg.shape, combine is np.logical_and)
    for dy, dx in se.offsets:
        view = padded[r + dy:r + dy + h, r + dx:r + dx + w]
        combine(out, view, out=out)
    return out


def dilate(mask, se: StructuringElement, border_value: bool = False):
    """Foreground wherever the element, centred there, hits input foreground."""
    fg, like = _grid(mask)
    # the element is symmetric, so no reflection is needed
    return _wrap(_sweep(fg, se, np.logical_or, border_value), like)


def erode(mask, se: StructuringElement, border_value: bool = False):
    """Foreground wherever the element, centred there, fits inside the foreground."""
    fg, like = _grid(mask)
    return _wrap(_sweep(fg, se, np.logical_and, border_value), like)


def remove_small_regions(mask, min_area: int, connectivity: int = 8):
    """Drop connected regions with fewer than ``min_area`` pixels."""
    if min_area < 0:
        raise ValueError("min_area must be non-negative")
    fg, like = _grid(mask)
    regions = connected_components(fg, connectivity)
    keep = np.zeros(regions.count + 1, dtype=bool)
    for label, area in regions.areas.items():
        keep[label] = area >= min_area
    return _wrap(keep[regions.labels], like)


def map_slices(volume: MaskVolume, fn) -> MaskVolume:
    """Apply a slice operation to every z-plane of a volume."""
    out = np.stack([np.asarray(fn(volume.voxels[z]), dtype=bool) for z in range(volume.depth)])
    return volume.replace(voxels=out)


def intensity_histogram(prob: ProbabilityVolume | np.ndarray, bins: int = DEFAULT_BINS) -> IntensityHistogram:
    values = prob.values if isinstance(prob, ProbabilityVolume) else np.asarray(prob)
    counts, edges = np.histogram(values, bins=bins, range=(0.0, 1.0))
    centers = (edges[:-1] + edges[1:]) / 2
    return IntensityHistogram(counts, centers, edges)


def histogram_peaks(hist: IntensityHistogram) -> list[int]:
    """Bin indices of strict local maxima, highest first.

    End bins compare against their single neighbour.  Equal heights are
    ordered by lower intensity first.
    """
    c = np.asarray(hist.counts, dtype=np.int64)
    padded = np.concatenate([[-1], c, [-1]])
    is_peak = (c > padded[:-2]) & (c > padded[2:]) & (c > 0)
    idx = np.flatnonzero(is_peak)
    centers = np.asarray(hist.centers)
    order = sorted(idx.tolist(), key=lambda i: (-c[i], centers[i]))
    return order


def threshold_from_histogram(hist: IntensityHistogram, weights: Sequence[float] | None = None,
                             n_peaks: int = DEFAULT_PEAKS,
                             fallback: float = FALLBACK_THRESHOLD) -> AdaptiveThreshold:
    """Weighted mean of the intensities at the 3rd..N-th highest peaks.

    ``I_d = sum_{i=3..N} a_i * intensity(peak_i) / (N - 2)``; weights default
    to 1.  With fewer than N peaks the fixed ``fallback`` is returned and
    flagged.
    """
    if n_peaks < 3:
        raise ValueError("n_peaks must be at least 3")
    if weights is None:
        weights = [1.0] * (n_peaks - 2)
    weights = [float(a) for a in weights]
    if len(weights) != n_peaks - 2:
        raise ValueError(f"expected {n_peaks - 2} weights, got {len(weights)}")
    peaks = histogram_peaks(hist)
    if len(peaks) < n_peaks:
        return AdaptiveThreshold(float(fallback), True, ())
    intensities = tuple(float(hist.centers[i]) for i in peaks[2:n_peaks])
    value = math.fsum(a * v for a, v in zip(weights, intensities)) / (n_peaks - 2)
    return AdaptiveThreshold(value, False, intensities)


def adaptive_threshold(prob: ProbabilityVolume | np.ndarray, weights: Sequence[float] | None = None,
                       n_peaks: int = DEFAULT_PEAKS, bins: int = DEFAULT_BINS,
                       fallback: float = FALLBACK_THRESHOLD) -> AdaptiveThreshold:
    """Histogram-peak threshold computed over all voxels of ``prob``."""
    return threshold_from_histogram(intensity_histogram(prob, bins), weights, n_peaks, fallback)


def _structure(ndim: int, connectivity: int) -> np.ndarray:
    table = {(2, 4): 1, (2, 8): 2, (3, 6): 1, (3, 18): 2, (3, 26): 3}
    try:
        rank = table[(ndim, connectivity)]
    except KeyError:
        raise ValueError(f"connectivity {connectivity} is not valid for {ndim}D input") from None
    return ndimage.generate_binary_structure(ndim, rank)


def hysteresis_threshold(prob, low: float, high: float, connectivity: int | None = None) -> np.ndarray:
    """Keep voxels >= ``low`` that connect to some voxel >= ``high``.

    Accepts a 2D or 3D array (or a ProbabilityVolume); returns a boolean
    array of the same shape.  Default connectivity is 8 in 2D, 26 in 3D.
    """
    if not 0.0 <= low <= high <= 1.0:
        raise ValueError(f"need 0 <= low <= high <= 1, got low={low}, high={high}")
    values = prob.values if isinstance(prob, ProbabilityVolume) else np.asarray(prob)
    if connectivity is None:
        connectivity = 8 if values.ndim == 2 else 26
    labels, n = ndimage.label(values >= low, structure=_structure(values.ndim, connectivity))
    seeded = np.zeros(n + 1, dtype=bool)
    seeded[np.unique(labels[values >= high])] = True
    seeded[0] = False
    return seeded[labels]


def apply_threshold(prob: ProbabilityVolume, t: float, subject_id: str | None = None) -> MaskVolume:
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {t}")
    return MaskVolume(prob.values > t, prob.spacing, subject_id)
