"""Per-fold evaluation with mean and sample standard deviation.

Subjects are split into five disjoint test folds, as in open-world eye
benchmarks. Each fold is scored on its own; the summary reports the fold
average, its spread, and the EER of all folds pooled together.
"""

import numpy as np

from periscope.ingest import FoldSpec
from periscope.matcher import score_pairs
from periscope.metrics import combined_eer, dumps, evaluate, fold_report
from periscope.protocols import build_eye_galleries, gen_ufpr_fold_pairs
from periscope.synthetic import gen_synthetic_embeddings

store = gen_synthetic_embeddings(100, 6, 32, separation=1.5, noise=1.0, seed=21, per_eye_ids=True)
subjects = sorted({r.subject_id for r in store})
rng = np.random.default_rng(0)
order = rng.permutation(subjects)
folds = [FoldSpec(k + 1, tuple(part)) for k, part in enumerate(np.array_split(order, 5))]

score_sets = []
for fold in folds:
    gallery = build_eye_galleries(store, fold.test_subject_ids)
    pairs = gen_ufpr_fold_pairs(fold, gallery, mode="per_eye_exhaustive")
    score_sets.append(score_pairs(store, pairs, "chi2"))

report = fold_report([evaluate(s) for s in score_sets], [f.fold_id for f in folds])
print(dumps({"avg": report["avg"], "std": report["std"]}), end="")
for f in report["folds"]:
    print(f"fold {f['fold_id']}: EER {f['eer_pct']:.2f}%  ({f['n_genuine']} genuine, "
          f"{f['n_impostor']} impostor)")
print(f"pooled EER {combined_eer(score_sets, 'pooled'):.2f}%, "
      f"mean of fold EERs {combined_eer(score_sets, 'mean'):.2f}%")
