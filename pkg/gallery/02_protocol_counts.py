"""How many comparisons each verification protocol produces.

For 368 subjects with 10 images per pose the closed forms give the counts
below; the generators are then run on a smaller gallery to show they agree.
"""

from periscope.protocols import (UFPR_REFERENCE_COUNTS, build_galleries, count_pairs,
                                 gen_cross_pose_pairs, gen_same_pose_pairs)
from periscope.synthetic import gen_synthetic_manifest

print("same-pose, 368 x 10:  genuine %d, impostor %d" % count_pairs("same_pose", 368, 10))
print("cross-pose, 368 x 10: genuine %d, impostor %d" % count_pairs("cross_pose", 368, 10))

# UFPR eye folds: 374 test subjects with 15 samples per eye
g, i = count_pairs("ufpr_per_eye", 374, 15)
print(f"UFPR per-eye rule:    genuine {g}, impostor {i}")
print(f"official UFPR lists:  genuine {UFPR_REFERENCE_COUNTS[0]}, impostor {UFPR_REFERENCE_COUNTS[1]}")
# the genuine counts agree but the official impostor lists are far larger, so
# real UFPR runs should pass the official pair files through (external mode)

faces = gen_synthetic_manifest(5, 4, poses=("frontal", "profile"))
galleries = build_galleries(faces)
same = gen_same_pose_pairs(galleries, "frontal")
cross = gen_cross_pose_pairs(galleries, "frontal", "profile")
print(f"\n5 subjects x 4 images: same-pose {same.n_genuine}/{same.n_impostor}, "
      f"cross-pose {cross.n_genuine}/{cross.n_impostor}")
print("first impostor pair:", next(e for e in same if e.label == "impostor"))
