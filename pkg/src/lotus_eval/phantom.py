"""Synthetic phantoms, exact lattice transforms and classical segmenters.

Shape centres and sizes are given in voxel-index units: a voxel at index
``(x, y, z)`` has its centre at exactly those coordinates.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .masks import MaskVolume, VoxelSpacing

__all__ = [
    "Shape",
    "PhantomSpec",
    "ImageVolume",
    "TRANSFORMS",
    "generate_phantom",
    "lattice_transform",
    "threshold_segment",
    "region_grow",
]

SHAPE_KINDS = ("sphere", "ellipsoid", "box")
TRANSFORMS = ("rot90", "rot180", "rot270", "flip-h", "flip-v")


@dataclass(frozen=True)
class Shape:
    """``size`` is a radius (sphere), semi-axes (ellipsoid) or full edge lengths (box)."""

    kind: str
    center: tuple[float, float, float]
    size: float | tuple[float, float, float]
    intensity: float = 1.0

    def __post_init__(self):
        if self.kind not in SHAPE_KINDS:
            raise ValueError(f"unknown shape kind {self.kind!r}; expected one of {SHAPE_KINDS}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))
        if len(self.center) != 3:
            raise ValueError("shape center needs three coordinates")
        size = self.size
        if self.kind == "sphere":
            if not np.isscalar(size):
                raise ValueError("sphere size must be a single radius")
            size = float(size)
            extents = (size,) * 3
        else:
            size = tuple(float(s) for s in size)
            if len(size) != 3:
                raise ValueError(f"{self.kind} size needs three components")
            extents = size
        if min(extents) <= 0:
            raise ValueError("shape size must be positive")
        object.__setattr__(self, "size", size)

    def half_extents(self) -> np.ndarray:
        if self.kind == "sphere":
            return np.full(3, self.size)
        if self.kind == "ellipsoid":
            return np.asarray(self.size)
        return np.asarray(self.size) / 2.0

    def contains(self, x: np.ndarray, y: np.ndarray, z: np.ndarray) -> np.ndarray:
        cx, cy, cz = self.center
        if self.kind == "sphere":
            r = self.size
            return (x - cx) ** 2 + (y - cy) ** 2 + (z - cz) ** 2 <= r * r
        if self.kind == "ellipsoid":
            a, b, c = self.size
            return ((x - cx) / a) ** 2 + ((y - cy) / b) ** 2 + ((z - cz) / c) ** 2 <= 1.0
        # half-open so an integer edge length covers exactly that many voxels
        hx, hy, hz = self.half_extents()
        return ((cx - hx <= x) & (x < cx + hx) & (cy - hy <= y) & (y < cy + hy)
                & (cz - hz <= z) & (z < cz + hz))

    def as_dict(self) -> dict:
        size = self.size if self.kind == "sphere" else list(self.size)
        return {"kind": self.kind, "center": list(self.center), "size": size, "intensity": self.intensity}


@dataclass(frozen=True)
class PhantomSpec:
    width: int
    height: int
    depth: int
    shapes: tuple[Shape, ...] = ()
    spacing: VoxelSpacing = field(default_factory=VoxelSpacing)
    background: float = 0.0
    noise: float = 0.0

    def __post_init__(self):
        if min(self.width, self.height, self.depth) <= 0:
            raise ValueError("phantom dimensions must be positive")
        if self.noise < 0:
            raise ValueError("noise amplitude must be non-negative")
        shapes = tuple(s if isinstance(s, Shape) else Shape(**s) for s in self.shapes)
        object.__setattr__(self, "shapes", shapes)
        if not isinstance(self.spacing, VoxelSpacing):
            object.__setattr__(self, "spacing", VoxelSpacing(*self.spacing))
        upper = np.array([self.width, self.height, self.depth]) - 0.5
        for i, s in enumerate(shapes):
            lo = np.asarray(s.center) - s.half_extents()
            hi = np.asarray(s.center) + s.half_extents()
            if (lo < -0.5).any() or (hi > upper).any():
                raise ValueError(f"shapes[{i}] ({s.kind}) extends outside the {self.width}x{self.height}x{self.depth} grid")

    @classmethod
    def from_dict(cls, d: dict) -> "PhantomSpec":
        dims = d["dims"]
        return cls(int(dims[0]), int(dims[1]), int(dims[2]),
                   tuple(Shape(**s) for s in d.get("shapes", ())),
                   VoxelSpacing(*d.get("spacing", (1.0, 1.0, 1.0))),
                   float(d.get("background", 0.0)), float(d.get("noise", 0.0)))

    def as_dict(self) -> dict:
        return {"dims": [self.width, self.height, self.depth],
                "spacing": list(self.spacing.as_tuple()),
                "background": self.background, "noise": self.noise,
                "shapes": [s.as_dict() for s in self.shapes]}


@dataclass(frozen=True, eq=False)
class ImageVolume:
    values: np.ndarray
    spacing: VoxelSpacing = field(default_factory=VoxelSpacing)

    def __post_init__(self):
        vals = np.array(self.values, dtype=np.float64, copy=True)
        if vals.ndim != 3:
            raise ValueError("image volume must be 3D")
        if not np.isfinite(vals).all():
            raise ValueError("image values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        if not isinstance(self.spacing, VoxelSpacing):
            object.__setattr__(self, "spacing", VoxelSpacing(*self.spacing))

    def __eq__(self, other):
        if not isinstance(other, ImageVolume):
            return NotImplemented
        return self.spacing == other.spacing and np.array_equal(self.values, other.values)


def generate_phantom(spec: PhantomSpec, seed: int | None = 0, subject_id: str | None = None,
                     clip: bool = True) -> tuple[ImageVolume, MaskVolume]:
    """Render image and ground truth; a voxel is tumour iff its centre is inside a shape.

    Later shapes overwrite earlier ones in the image.  Uniform noise in
    ``[-noise, noise]`` is added, and with ``clip`` the result is clipped to
    [0, 1] so it can be stored as a probability-style volume.
    """
    z, y, x = np.mgrid[0:spec.depth, 0:spec.height, 0:spec.width]
    mask = np.zeros(x.shape, dtype=bool)
    image = np.full(x.shape, float(spec.background))
    for s in spec.shapes:
        inside = s.contains(x, y, z)
        mask |= inside
        image[inside] = spec.background + s.intensity
    if spec.noise > 0:
        rng = np.random.default_rng(seed)
        image = image + rng.uniform(-spec.noise, spec.noise, size=image.shape)
    if clip:
        image = np.clip(image, 0.0, 1.0)
    return ImageVolume(image, spec.spacing), MaskVolume(mask, spec.spacing, subject_id)


def _transform_array(arr: np.ndarray, t: str) -> np.ndarray:
    # axes: 0 = z, 1 = y, 2 = x
    if t == "rot90":
        return np.rot90(arr, 1, axes=(1, 2))
    if t == "rot180":
        return np.rot90(arr, 2, axes=(1, 2))
    if t == "rot270":
        return np.rot90(arr, 3, axes=(1, 2))
    if t == "flip-h":
        return arr[:, :, ::-1]
    if t == "flip-v":
        return arr[:, ::-1, :]
    raise ValueError(f"unknown transform {t!r}; expected one of {TRANSFORMS}")


def lattice_transform(volume, t: str):
    """In-plane rotation or flip as a pure index permutation.

    Quarter turns swap width/height and the in-plane spacing with them.
    """
    if t not in TRANSFORMS:
        raise ValueError(f"unknown transform {t!r}; expected one of {TRANSFORMS}")
    sp = volume.spacing
    if t in ("rot90", "rot270"):
        sp = VoxelSpacing(sp.sy, sp.sx, sp.sz)
    if isinstance(volume, MaskVolume):
        return MaskVolume(np.ascontiguousarray(_transform_array(volume.voxels, t)), sp, volume.subject_id)
    if isinstance(volume, ImageVolume):
        return ImageVolume(np.ascontiguousarray(_transform_array(volume.values, t)), sp)
    from .postproc import ProbabilityVolume

    if isinstance(volume, ProbabilityVolume):
        return ProbabilityVolume(np.ascontiguousarray(_transform_array(volume.values, t)), sp)
    raise TypeError(f"cannot transform {type(volume).__name__}")


def threshold_segment(image: ImageVolume, t: float, subject_id: str | None = None) -> MaskVolume:
    return MaskVolume(image.values > t, image.spacing, subject_id)


def _neighbour_offsets(connectivity: int) -> list[tuple[int, int, int]]:
    offsets = []
    for dz in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                order = abs(dz) + abs(dy) + abs(dx)
                if order == 0:
                    continue
                if (connectivity == 6 and order == 1) or (connectivity == 18 and order <= 2) \
                        or connectivity == 26:
                    offsets.append((dz, dy, dx))
    if not offsets:
        raise ValueError(f"connectivity must be 6, 18 or 26, got {connectivity}")
    return offsets


def region_grow(image: ImageVolume, seeds: Sequence[Sequence[int]], tolerance: float,
                connectivity: int = 6, subject_id: str | None = None) -> MaskVolume:
    """Seeded region growing with a running-mean homogeneity test.

    Seeds are ``(x, y, z)`` voxel indices.  A neighbour joins when its
    intensity is within ``tolerance`` of the current region mean; the mean
    is updated as each voxel joins.  The frontier is FIFO and neighbours are
    visited in lexicographic (dz, dy, dx) order.
    """
    if not seeds:
        raise ValueError("region growing needs at least one seed")
    if tolerance < 0:
        raise ValueError("tolerance must be non-negative")
    vals = image.values
    depth, height, width = vals.shape
    offsets = _neighbour_offsets(connectivity)
    region = np.zeros(vals.shape, dtype=bool)
    queue: deque[tuple[int, int, int]] = deque()
    # incremental mean stays exact for constant intensities
    mean, n = 0.0, 0
    for seed in seeds:
        x, y, z = (int(c) for c in seed)
        if not (0 <= x < width and 0 <= y < height and 0 <= z < depth):
            raise ValueError(f"seed {tuple(seed)} lies outside the {width}x{height}x{depth} grid")
        if not region[z, y, x]:
            region[z, y, x] = True
            n += 1
            mean += (vals[z, y, x] - mean) / n
            queue.append((z, y, x))
    while queue:
        z, y, x = queue.popleft()
        for dz, dy, dx in offsets:
            zz, yy, xx = z + dz, y + dy, x + dx
            if not (0 <= zz < depth and 0 <= yy < height and 0 <= xx < width) or region[zz, yy, xx]:
                continue
            v = vals[zz, yy, xx]
            if abs(v - mean) <= tolerance:
                region[zz, yy, xx] = True
                n += 1
                mean += (v - mean) / n
                queue.append((zz, yy, xx))
    return MaskVolume(region, image.spacing, subject_id)
