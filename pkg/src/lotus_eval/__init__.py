"""Evaluation harness for volumetric binary tumour-segmentation masks."""

from .masks import (BoundaryPointSet, LabeledRegions, MaskSlice, MaskVolume, VoxelSpacing,
                    boundary_points, connected_components, extract_slice)
from .metrics import (DEFAULT_PERFECT_CAP, EvaluationMode, MetricTriple, SliceEvaluation,
                      SubjectEvaluation, SubjectPair, dice_loss, dice_slice,
                      directed_avg_hausdorff, evaluate_cohort, evaluate_slice, evaluate_subject,
                      focal_loss, hausdorff_95, inverse_distance_score, undirected_avg_hausdorff)
from .postproc import (ProbabilityVolume, StructuringElement, adaptive_threshold, apply_threshold,
                       dilate, erode, hysteresis_threshold, remove_small_regions)
from .phantom import (ImageVolume, PhantomSpec, Shape, generate_phantom, lattice_transform,
                      region_grow, threshold_segment)
from .scoring import (LeaderBoard, ScoreCard, TeamResult, build_scorecard, build_scorecards,
                      rank_teams, scale_to_score, significance_matrix, wilcoxon_rank_sum)

__version__ = "0.1.0"
