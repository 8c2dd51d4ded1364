"""Scoring a synthetic embedding store and reading off EER and AUC.

Chi-square distances and cosine similarities are computed for the same pair
list. They have opposite polarity, which the ScoreSet carries along so the
metrics need no extra flags.
"""

import numpy as np

from periscope.matcher import score_pairs
from periscope.metrics import auc, det_curve, eer
from periscope.protocols import build_galleries, gen_same_pose_pairs
from periscope.synthetic import gen_synthetic_embeddings, gen_synthetic_manifest

n_subjects, n_images = 60, 5
store = gen_synthetic_embeddings(n_subjects, n_images, dim=64, separation=0.8, noise=1.0, seed=3)
pairs = gen_same_pose_pairs(build_galleries(gen_synthetic_manifest(n_subjects, n_images)), "frontal")
print(f"{len(pairs)} pairs ({pairs.n_genuine} genuine)")

for metric in ("chi2", "cosine"):
    s = score_pairs(store, pairs, metric, threads=2)
    print(f"{metric:6s} ({s.polarity:10s}) genuine mean {s.genuine.mean():8.4f}, "
          f"impostor mean {s.impostor.mean():8.4f}, EER {eer(s):5.2f}%, AUC {auc(s):6.2f}%")

curve = det_curve(score_pairs(store, pairs, "chi2"))
for target in (0.001, 0.01, 0.1):
    k = np.searchsorted(curve.far, target, side="right") - 1
    print(f"FRR at FAR <= {target:5.3f}: {100 * curve.frr[k]:5.2f}%")
