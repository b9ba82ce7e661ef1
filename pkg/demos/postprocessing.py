"""Cleaning a noisy probability map: adaptive threshold, hysteresis, morphology."""

import numpy as np

from lotus_eval.postproc import (ProbabilityVolume, StructuringElement, adaptive_threshold, apply_threshold,
                                 dilate, erode, hysteresis_threshold, map_slices, remove_small_regions)

rng = np.random.default_rng(0)
d, h, w = 6, 48, 48
z, y, x = np.mgrid[0:d, 0:h, 0:w]
r2 = (x - 24) ** 2 + (y - 24) ** 2
core = (r2 <= 64) & (z >= 1) & (z <= 4)
# a model that is confident inside, hesitant on the rim and noisy elsewhere
prob = np.full(core.shape, 0.02)
prob[rng.random(core.shape) < 0.08] = 0.3
prob[rng.random(core.shape) < 0.03] = 0.45
prob[(r2 <= 100) & (z >= 1) & (z <= 4)] = 0.6
prob[core] = 0.9
# confident false alarms
prob[0, 3:5, 40:42] = 0.9
prob[5, 44, 3] = 0.95
prob = ProbabilityVolume(prob)

t = adaptive_threshold(prob)
print(f"adaptive threshold: {t.value:.4f} (fallback={t.fallback})")
mask = apply_threshold(prob, t.value)
print("foreground after threshold:", mask.count)

hyst = hysteresis_threshold(prob, 0.4, 0.8)
print("foreground after hysteresis:", int(hyst.sum()))

clean = map_slices(mask, lambda s: remove_small_regions(s, 10))
print("foreground after remove-small:", clean.count)

se = StructuringElement.circular(2)
closed = map_slices(clean, lambda s: erode(dilate(s, se), se))
print("foreground after closing:", closed.count)
print("core voxels:", int(core.sum()))

