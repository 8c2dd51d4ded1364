"""Ocular biometrics evaluation toolkit.

Landmark-driven eye crops, verification pair protocols, cosine and
chi-square template matching, score fusion and EER/AUC/DET evaluation.
"""

from .geometry import (compute_alignment, extract_crops, frontality_check, inter_eye_distance,
                       normalize_pixels, resolution_check)
from .ingest import (EmbeddingRecord, EmbeddingSet, FaceAnnotation, FoldSpec, PairEntry, PairList,
                     parse_face_manifest, parse_folds, parse_pair_list, read_embeddings,
                     write_embeddings)
from .matcher import (ScoreSet, chi2_distance, cosine_similarity, fuse_scores, pair_score,
                      score_pairs)
from .metrics import (aggregate_folds, auc, brute_force_eer, det_curve, eer, fusion_sweep)
from .protocols import (count_pairs, gen_cross_pose_pairs, gen_same_pose_pairs,
                        gen_ufpr_fold_pairs)
from .synthetic import gen_synthetic_embeddings, gen_synthetic_manifest

__version__ = "0.1.0"
