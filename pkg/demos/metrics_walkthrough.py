"""Slice and subject metrics on a few hand-made masks.

Run with ``python3 demos/metrics_walkthrough.py``.
"""

import numpy as np

from lotus_eval import MaskSlice, MaskVolume, SubjectPair, VoxelSpacing, boundary_points
from lotus_eval.metrics import evaluate_slice, evaluate_subject, undirected_avg_hausdorff, hausdorff_95


def square(shape, top, left, size):
    m = np.zeros(shape, bool)
    m[top:top + size, left:left + size] = True
    return m


shape = (32, 32)
gt = square(shape, 8, 8, 10)
pred = square(shape, 9, 11, 10)

gb = boundary_points(MaskSlice(gt))
pb = boundary_points(MaskSlice(pred))
print(f"boundary sizes: gt={len(gb)} pred={len(pb)}")
print(f"mean surface distance: {undirected_avg_hausdorff(gb, pb):.4f}")
print(f"hd95:                  {hausdorff_95(gb, pb):.4f}")

ev = evaluate_slice(MaskSlice(gt), MaskSlice(pred))
print("slice metrics:", ev.metrics.as_dict())

# a 0.7 x 0.7 x 3 mm scan; distances are reported in physical units
spacing = VoxelSpacing(0.7, 0.7, 3.0)
empty = np.zeros(shape, bool)
speck = square(shape, 0, 0, 2)
gt_vol = MaskVolume(np.stack([empty, gt, gt, empty]), spacing, "demo")
pred_vol = MaskVolume(np.stack([speck, pred, gt, empty]), spacing, "demo")
pair = SubjectPair(gt_vol, pred_vol)

# perfect slices score the cap (1000) on the inverse distances, which is
# why the subject averages below sit near 500
for mode in ("tumor-only", "all"):
    res = evaluate_subject(pair, mode)
    print(f"{mode:>10}: dice={res.metrics.dice:.4f} "
          f"msd^-1={res.metrics.msd_inverse:.4f} hd95^-1={res.metrics.hd95_inverse:.4f}")
    for s in res.slices:
        flag = " (false positive)" if s.fp_flag else ""
        print(f"    z={s.z_index} dice={s.metrics.dice:.4f}{flag}")
