"""Dice, average/95% Hausdorff distances and the slice-level scoring rules.

Slice conventions:

* ground truth empty, prediction non-empty (false positive): every metric 0
* both empty: dice 1, distance inverses ``perfect_cap``
* ground truth non-empty, prediction empty: every metric 0
* otherwise distances are measured between 2D boundaries and inverted

Inverses are ``1/d``; a perfect match (``d == 0``) maps to ``perfect_cap``
(default 1000).  Per-slice values are averaged after inversion.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .masks import BoundaryPointSet, MaskSlice, MaskVolume, boundary_points, extract_slice

__all__ = [
    "DEFAULT_PERFECT_CAP",
    "UndefinedDistanceError",
    "EmptyCohortError",
    "DimensionMismatchError",
    "EvaluationMode",
    "MetricTriple",
    "SliceEvaluation",
    "SubjectPair",
    "SubjectEvaluation",
    "dice_slice",
    "nearest_distances",
    "directed_avg_hausdorff",
    "undirected_avg_hausdorff",
    "directed_hausdorff_95",
    "hausdorff_95",
    "inverse_distance_score",
    "evaluate_slice",
    "evaluate_subject",
    "evaluate_cohort",
    "evaluate_subjects",
    "aggregate",
    "dice_loss",
    "focal_loss",
]

DEFAULT_PERFECT_CAP = 1000.0

# relative slack when deciding whether a k-d tree candidate list could hide
# a closer point; kd distances and the exact formula differ by a few ulps
_TIE_SLACK = 1e-9


class UndefinedDistanceError(ValueError):
    """Distance requested with an empty boundary set."""


class EmptyCohortError(ValueError):
    """No slices or subjects left to average over."""


class DimensionMismatchError(ValueError):
    pass


class EvaluationMode(str, enum.Enum):
    ALL_SLICES = "all"
    TUMOR_ONLY = "tumor-only"

    @classmethod
    def parse(cls, value) -> "EvaluationMode":
        if isinstance(value, cls):
            return value
        aliases = {"all": cls.ALL_SLICES, "all-slices": cls.ALL_SLICES,
                   "tumor-only": cls.TUMOR_ONLY, "tumor-containing-only": cls.TUMOR_ONLY,
                   "tumor": cls.TUMOR_ONLY}
        try:
            return aliases[str(value)]
        except KeyError:
            raise ValueError(f"unknown evaluation mode {value!r}") from None


@dataclass(frozen=True)
class MetricTriple:
    dice: float
    msd_inverse: float
    hd95_inverse: float

    def __post_init__(self):
        if not 0.0 <= self.dice <= 1.0:
            raise ValueError(f"dice must lie in [0, 1], got {self.dice}")
        if self.msd_inverse < 0 or self.hd95_inverse < 0:
            raise ValueError("inverse distances must be non-negative")

    def as_dict(self) -> dict[str, float]:
        return {"dice": self.dice, "msd_inverse": self.msd_inverse, "hd95_inverse": self.hd95_inverse}

    @classmethod
    def from_dict(cls, d) -> "MetricTriple":
        return cls(float(d["dice"]), float(d["msd_inverse"]), float(d["hd95_inverse"]))


ZERO = MetricTriple(0.0, 0.0, 0.0)


@dataclass(frozen=True)
class SliceEvaluation:
    z_index: int
    gt_empty: bool
    pred_empty: bool
    metrics: MetricTriple

    @property
    def fp_flag(self) -> bool:
        return self.gt_empty and not self.pred_empty


@dataclass(frozen=True)
class SubjectPair:
    ground_truth: MaskVolume
    prediction: MaskVolume
    subject_id: str | None = None

    def __post_init__(self):
        gt, pred = self.ground_truth, self.prediction
        if gt.dims != pred.dims:
            raise DimensionMismatchError(
                f"subject {self.subject_id!r}: ground truth dims {gt.dims} != prediction dims {pred.dims}")
        if gt.spacing != pred.spacing:
            raise DimensionMismatchError(
                f"subject {self.subject_id!r}: spacing {gt.spacing.as_tuple()} != {pred.spacing.as_tuple()}")
        if self.subject_id is None:
            object.__setattr__(self, "subject_id", gt.subject_id)


@dataclass(frozen=True)
class SubjectEvaluation:
    subject_id: str | None
    mode: EvaluationMode
    metrics: MetricTriple
    slices: tuple[SliceEvaluation, ...]
    # set only for volumetric boundaries, where distances are per subject
    volume_distances: tuple[float, float] | None = field(default=None)


def _check_same_shape(gt: MaskSlice, pred: MaskSlice):
    if gt.voxels.shape != pred.voxels.shape:
        raise DimensionMismatchError(f"slice shapes differ: {gt.voxels.shape} vs {pred.voxels.shape}")


def dice_slice(gt: MaskSlice, pred: MaskSlice) -> float:
    """Overlap ``2|X∩Y| / (|X|+|Y|)``; 1 when both masks are empty."""
    _check_same_shape(gt, pred)
    x, y = gt.voxels, pred.voxels
    total = int(np.count_nonzero(x)) + int(np.count_nonzero(y))
    if total == 0:
        return 1.0
    return 2.0 * int(np.count_nonzero(x & y)) / total


def _exact_dist(ca: np.ndarray, cb: np.ndarray, scale: np.ndarray) -> np.ndarray:
    diff = (ca - cb) * scale
    sq = diff[..., 0] * diff[..., 0] + diff[..., 1] * diff[..., 1]
    for axis in range(2, diff.shape[-1]):
        sq = sq + diff[..., axis] * diff[..., axis]
    return np.sqrt(sq)


def nearest_distances(a: BoundaryPointSet, b: BoundaryPointSet) -> np.ndarray:
    """Distance from every point of ``a`` to its closest point in ``b``.

    A k-d tree proposes candidates; the reported value is recomputed from
    grid-coordinate differences so that it is the exact minimum of one fixed
    formula, independent of point order or lattice orientation.
    """
    if a.is_empty() or b.is_empty():
        raise UndefinedDistanceError("distance to or from an empty boundary is undefined")
    if a.spacing != b.spacing:
        raise ValueError(f"point sets use different spacing: {a.spacing} vs {b.spacing}")
    scale = np.asarray(a.spacing)
    pa, pb = a.points, b.points
    tree = cKDTree(pb)
    k = min(len(b), 8)
    kd, nn = tree.query(pa, k=k)
    if k == 1:
        kd, nn = kd[:, None], nn[:, None]
    best = _exact_dist(a.coords[:, None, :], b.coords[nn], scale).min(axis=1)
    if k < len(b):
        radius = best * (1 + _TIE_SLACK) + 1e-12
        for i in np.flatnonzero(kd[:, -1] <= radius):
            cand = tree.query_ball_point(pa[i], r=radius[i])
            best[i] = _exact_dist(a.coords[i], b.coords[cand], scale).min()
    return best


def directed_avg_hausdorff(a: BoundaryPointSet, b: BoundaryPointSet) -> float:
    d = nearest_distances(a, b)
    return math.fsum(d.tolist()) / len(d)


def undirected_avg_hausdorff(a: BoundaryPointSet, b: BoundaryPointSet) -> float:
    """Mean-surface distance: average of the two directed averages."""
    return (directed_avg_hausdorff(a, b) + directed_avg_hausdorff(b, a)) / 2.0


def directed_hausdorff_95(a: BoundaryPointSet, b: BoundaryPointSet) -> float:
    """The ceil(0.95 n)-th smallest nearest-neighbour distance (no interpolation)."""
    d = np.sort(nearest_distances(a, b))
    k = (95 * len(d) + 99) // 100
    return float(d[k - 1])


def hausdorff_95(a: BoundaryPointSet, b: BoundaryPointSet) -> float:
    return (directed_hausdorff_95(a, b) + directed_hausdorff_95(b, a)) / 2.0


def inverse_distance_score(d: float, perfect_cap: float = DEFAULT_PERFECT_CAP) -> float:
    if d < 0 or math.isnan(d):
        raise ValueError(f"distance must be non-negative, got {d}")
    if d == 0:
        return float(perfect_cap)
    return 1.0 / d


def _distance_inverses(gt_b, pred_b, perfect_cap) -> tuple[float, float]:
    msd = undirected_avg_hausdorff(gt_b, pred_b)
    hd = hausdorff_95(gt_b, pred_b)
    return inverse_distance_score(msd, perfect_cap), inverse_distance_score(hd, perfect_cap)


def evaluate_slice(gt: MaskSlice, pred: MaskSlice, perfect_cap: float = DEFAULT_PERFECT_CAP,
                   distances: bool = True) -> SliceEvaluation:
    _check_same_shape(gt, pred)
    gt_empty, pred_empty = gt.is_empty(), pred.is_empty()
    if gt_empty and pred_empty:
        m = MetricTriple(1.0, float(perfect_cap), float(perfect_cap))
    elif gt_empty or pred_empty:
        m = ZERO
    else:
        dice = dice_slice(gt, pred)
        if distances:
            msd_inv, hd_inv = _distance_inverses(boundary_points(gt), boundary_points(pred), perfect_cap)
        else:
            msd_inv = hd_inv = 0.0
        m = MetricTriple(dice, msd_inv, hd_inv)
    return SliceEvaluation(gt.z_index, gt_empty, pred_empty, m)


def _mean(values) -> float:
    values = list(values)
    return math.fsum(values) / len(values)


def _mean_triple(triples) -> MetricTriple:
    triples = list(triples)
    return MetricTriple(
        min(1.0, _mean(t.dice for t in triples)),
        _mean(t.msd_inverse for t in triples),
        _mean(t.hd95_inverse for t in triples),
    )


def _volume_inverses(pair: SubjectPair, zs: list[int], perfect_cap: float) -> tuple[float, float]:
    keep = np.zeros(pair.ground_truth.depth, dtype=bool)
    keep[zs] = True
    gt = pair.ground_truth.replace(voxels=pair.ground_truth.voxels & keep[:, None, None])
    pred = pair.prediction.replace(voxels=pair.prediction.voxels & keep[:, None, None])
    gt_empty, pred_empty = gt.count == 0, pred.count == 0
    if gt_empty and pred_empty:
        return float(perfect_cap), float(perfect_cap)
    if gt_empty or pred_empty:
        return 0.0, 0.0
    return _distance_inverses(boundary_points(gt), boundary_points(pred), perfect_cap)


def evaluate_subject(pair: SubjectPair, mode="tumor-only", perfect_cap: float = DEFAULT_PERFECT_CAP,
                     boundary: str = "2d") -> SubjectEvaluation:
    """Average per-slice metrics of one subject.

    In tumor-only mode, slices with empty ground truth are skipped, so
    predictions on them carry no penalty.  With ``boundary="3d"`` the two
    distance metrics come from volumetric boundaries of the contributing
    slices (one value per subject) while dice stays slice-wise.
    """
    mode = EvaluationMode.parse(mode)
    if boundary not in ("2d", "3d"):
        raise ValueError(f"boundary must be '2d' or '3d', got {boundary!r}")
    gt, pred = pair.ground_truth, pair.prediction
    zs = [z for z in range(gt.depth)
          if mode is EvaluationMode.ALL_SLICES or gt.voxels[z].any()]
    if not zs:
        raise EmptyCohortError(f"subject {pair.subject_id!r} has no tumor-containing slices")
    per_slice = tuple(
        evaluate_slice(extract_slice(gt, z), extract_slice(pred, z), perfect_cap,
                       distances=boundary == "2d")
        for z in zs
    )
    if boundary == "2d":
        return SubjectEvaluation(pair.subject_id, mode, _mean_triple(s.metrics for s in per_slice), per_slice)
    msd_inv, hd_inv = _volume_inverses(pair, zs, perfect_cap)
    dice = min(1.0, _mean(s.metrics.dice for s in per_slice))
    return SubjectEvaluation(pair.subject_id, mode, MetricTriple(dice, msd_inv, hd_inv), per_slice,
                             volume_distances=(msd_inv, hd_inv))


def evaluate_subjects(pairs, mode="tumor-only", perfect_cap: float = DEFAULT_PERFECT_CAP,
                      boundary: str = "2d", workers: int = 1) -> list[SubjectEvaluation | None]:
    """Evaluate each pair; subjects without contributing slices yield ``None``."""
    def run(pair):
        try:
            return evaluate_subject(pair, mode, perfect_cap, boundary)
        except EmptyCohortError:
            return None

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, pairs))
    return [run(p) for p in pairs]


def aggregate(evaluations, weighting: str = "slice") -> MetricTriple:
    """Pool subject evaluations into one triple.

    ``weighting="slice"`` averages over every contributing slice of every
    subject; ``"subject"`` averages the per-subject means.  Subject-level
    volumetric distances are always subject-averaged.
    """
    evaluations = [e for e in evaluations if e is not None]
    if not evaluations:
        raise EmptyCohortError("no contributing slices in cohort")
    if weighting == "subject":
        return _mean_triple(e.metrics for e in evaluations)
    if weighting != "slice":
        raise ValueError(f"weighting must be 'slice' or 'subject', got {weighting!r}")
    pooled = _mean_triple(s.metrics for e in evaluations for s in e.slices)
    if any(e.volume_distances is not None for e in evaluations):
        by_subject = _mean_triple(e.metrics for e in evaluations)
        return MetricTriple(pooled.dice, by_subject.msd_inverse, by_subject.hd95_inverse)
    return pooled


def evaluate_cohort(pairs, mode="tumor-only", perfect_cap: float = DEFAULT_PERFECT_CAP,
                    boundary: str = "2d", weighting: str = "slice", workers: int = 1) -> MetricTriple:
    pairs = list(pairs)
    if not pairs:
        raise EmptyCohortError("cohort is empty")
    return aggregate(evaluate_subjects(pairs, mode, perfect_cap, boundary, workers), weighting)


def dice_loss(dice: float, form: str = "one-minus") -> float:
    if form == "one-minus":
        if not 0.0 <= dice <= 1.0:
            raise ValueError(f"dice must lie in [0, 1], got {dice}")
        return 1.0 - dice
    if form == "negative-log":
        if not 0.0 < dice <= 1.0:
            raise ValueError(f"negative-log dice loss needs dice in (0, 1], got {dice}")
        return -math.log(dice)
    raise ValueError(f"unknown dice loss form {form!r}")


def focal_loss(p, y, alpha: float = 1.0, gamma: float = 2.0):
    """``-alpha (1-q)^gamma log q`` with ``q = p`` for positives, ``1-p`` otherwise.

    Works elementwise on arrays; returns a float for scalar input.
    """
    p = np.asarray(p, dtype=np.float64)
    y = np.asarray(y)
    if np.any((p <= 0) | (p >= 1)) or np.any(np.isnan(p)):
        raise ValueError("probabilities must lie strictly inside (0, 1)")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    if alpha < 0 or gamma < 0:
        raise ValueError("alpha and gamma must be non-negative")
    q = np.where(y == 1, p, 1.0 - p)
    loss = -alpha * (1.0 - q) ** gamma * np.log(q)
    return float(loss) if loss.ndim == 0 else loss
