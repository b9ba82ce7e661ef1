"""Voxel-grid containers, boundary extraction and connected components.

Arrays are stored slice-major as ``(depth, height, width)`` so that the
flattened C-order buffer runs x-fastest, then y, then z.  Physical
coordinates of a voxel are its index multiplied by the voxel spacing.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage

__all__ = [
    "VoxelSpacing",
    "MaskVolume",
    "MaskSlice",
    "BoundaryPointSet",
    "LabeledRegions",
    "extract_slice",
    "boundary_points",
    "connected_components",
]


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


def _as_binary(voxels, ndim: int) -> np.ndarray:
    arr = np.asarray(voxels)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}D voxel array, got shape {arr.shape}")
    if arr.dtype != bool:
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("mask voxels must be exactly 0 or 1")
        arr = arr.astype(bool)
    return _frozen(arr)


@dataclass(frozen=True)
class VoxelSpacing:
    """Physical voxel edge lengths in millimetres."""

    sx: float = 1.0
    sy: float = 1.0
    sz: float = 1.0

    def __post_init__(self):
        for name in ("sx", "sy", "sz"):
            value = float(getattr(self, name))
            if not np.isfinite(value) or value <= 0:
                raise ValueError(f"spacing {name} must be a positive finite number, got {value}")
            object.__setattr__(self, name, value)

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.sx, self.sy, self.sz)


@dataclass(frozen=True, eq=False)
class MaskSlice:
    """Read-only view of one z-plane: ``voxels`` has shape ``(height, width)``."""

    voxels: np.ndarray
    z_index: int = 0
    spacing: tuple[float, float] = (1.0, 1.0)

    def __post_init__(self):
        object.__setattr__(self, "voxels", _as_binary(self.voxels, 2))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @property
    def width(self) -> int:
        return self.voxels.shape[1]

    @property
    def height(self) -> int:
        return self.voxels.shape[0]

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.voxels))

    def is_empty(self) -> bool:
        return not self.voxels.any()

    def __eq__(self, other):
        if not isinstance(other, MaskSlice):
            return NotImplemented
        return (
            self.z_index == other.z_index
            and self.spacing == other.spacing
            and np.array_equal(self.voxels, other.voxels)
        )


@dataclass(frozen=True, eq=False)
class MaskVolume:
    """Binary voxel grid; ``voxels`` has shape ``(depth, height, width)``."""

    voxels: np.ndarray
    spacing: VoxelSpacing = field(default_factory=VoxelSpacing)
    subject_id: str | None = None

    def __post_init__(self):
        object.__setattr__(self, "voxels", _as_binary(self.voxels, 3))
        if not isinstance(self.spacing, VoxelSpacing):
            object.__setattr__(self, "spacing", VoxelSpacing(*self.spacing))
        if 0 in self.voxels.shape:
            raise ValueError("mask dimensions must be positive")

    @classmethod
    def zeros(cls, width: int, height: int, depth: int, spacing=None, subject_id=None):
        return cls(np.zeros((depth, height, width), dtype=bool), spacing or VoxelSpacing(), subject_id)

    @property
    def width(self) -> int:
        return self.voxels.shape[2]

    @property
    def height(self) -> int:
        return self.voxels.shape[1]

    @property
    def depth(self) -> int:
        return self.voxels.shape[0]

    @property
    def dims(self) -> tuple[int, int, int]:
        return (self.width, self.height, self.depth)

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.voxels))

    def slices(self):
        for z in range(self.depth):
            yield extract_slice(self, z)

    def replace(self, voxels=None, spacing=None, subject_id=None) -> "MaskVolume":
        return MaskVolume(
            self.voxels if voxels is None else voxels,
            self.spacing if spacing is None else spacing,
            self.subject_id if subject_id is None else subject_id,
        )

    def __eq__(self, other):
        if not isinstance(other, MaskVolume):
            return NotImplemented
        return (
            self.spacing == other.spacing
            and self.subject_id == other.subject_id
            and np.array_equal(self.voxels, other.voxels)
        )


@dataclass(frozen=True, eq=False)
class BoundaryPointSet:
    """Boundary points stored as grid coordinates plus a per-axis scale.

    ``coords`` are in grid units (integer voxel indices for extracted
    boundaries, ordered x, y[, z]); ``points`` gives physical positions.
    Keeping the two apart lets distance code work on exact index
    differences, which makes results identical under lattice symmetries.
    """

    coords: np.ndarray
    spacing: tuple[float, ...]
    source_shape: tuple[int, ...] | None = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=np.float64)
        if coords.ndim == 1 and coords.size == 0:
            coords = coords.reshape(0, len(self.spacing))
        if coords.ndim != 2 or coords.shape[1] != len(self.spacing):
            raise ValueError(f"coords must be (n, {len(self.spacing)}), got {coords.shape}")
        object.__setattr__(self, "coords", _frozen(coords))
        object.__setattr__(self, "spacing", tuple(float(s) for s in self.spacing))

    @classmethod
    def from_points(cls, points: Sequence[Sequence[float]]) -> "BoundaryPointSet":
        """Wrap raw physical coordinates (unit scale)."""
        pts = np.asarray(points, dtype=np.float64)
        if pts.size == 0:
            raise ValueError("from_points needs at least one point to infer dimensionality")
        return cls(pts, (1.0,) * pts.shape[1])

    @property
    def points(self) -> np.ndarray:
        return self.coords * np.asarray(self.spacing)

    @property
    def ndim(self) -> int:
        return len(self.spacing)

    def __len__(self) -> int:
        return self.coords.shape[0]

    def is_empty(self) -> bool:
        return len(self) == 0

    def as_set(self) -> set[tuple[float, ...]]:
        return {tuple(p) for p in self.points.tolist()}


@dataclass(frozen=True, eq=False)
class LabeledRegions:
    labels: np.ndarray
    areas: dict[int, int]
    bboxes: dict[int, tuple[slice, ...]]

    @property
    def count(self) -> int:
        return len(self.areas)


def extract_slice(volume: MaskVolume, z: int) -> MaskSlice:
    if not 0 <= z < volume.depth:
        raise IndexError(f"slice index {z} out of range for depth {volume.depth}")
    return MaskSlice(volume.voxels[z], z_index=z, spacing=(volume.spacing.sx, volume.spacing.sy))


def _face_structure(ndim: int) -> np.ndarray:
    return ndimage.generate_binary_structure(ndim, 1)


def boundary_points(mask: MaskSlice | MaskVolume, connectivity: str | None = None) -> BoundaryPointSet:
    """Centers of foreground voxels that touch background through a face.

    Voxels on the grid edge count as touching background. ``connectivity``
    is ``"in-plane-4"`` for slices and ``"volumetric-6"`` for volumes; it is
    inferred from the input type when omitted.
    """
    if isinstance(mask, MaskSlice):
        expected, spacing = "in-plane-4", mask.spacing
    elif isinstance(mask, MaskVolume):
        expected, spacing = "volumetric-6", mask.spacing.as_tuple()
    else:
        raise TypeError(f"expected MaskSlice or MaskVolume, got {type(mask).__name__}")
    if connectivity is not None and connectivity != expected:
        raise ValueError(f"{type(mask).__name__} boundaries use {expected!r} connectivity, not {connectivity!r}")

    fg = mask.voxels
    inner = ndimage.binary_erosion(fg, structure=_face_structure(fg.ndim), border_value=0)
    edge = fg & ~inner
    # argwhere yields (z, y, x) / (y, x); reverse to x-first ordering
    idx = np.argwhere(edge)[:, ::-1]
    return BoundaryPointSet(idx, spacing, source_shape=fg.shape)


def connected_components(mask: MaskSlice | np.ndarray, connectivity: int = 8) -> LabeledRegions:
    """Label in-plane regions with 4- or 8-adjacency (raster-scan order ids)."""
    fg = mask.voxels if isinstance(mask, MaskSlice) else np.asarray(mask, dtype=bool)
    if connectivity == 4:
        structure = ndimage.generate_binary_structure(2, 1)
    elif connectivity == 8:
        structure = ndimage.generate_binary_structure(2, 2)
    else:
        raise ValueError(f"in-plane connectivity must be 4 or 8, got {connectivity}")
    labels, n = ndimage.label(fg, structure=structure)
    if n:
        areas_arr = np.bincount(labels.ravel(), minlength=n + 1)[1:]
        boxes = ndimage.find_objects(labels)
    else:
        areas_arr, boxes = [], []
    areas = {i + 1: int(a) for i, a in enumerate(areas_arr)}
    bboxes = {i + 1: b for i, b in enumerate(boxes)}
    return LabeledRegions(_frozen(labels), areas, bboxes)
