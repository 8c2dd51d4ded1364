"""Score-level fusion of two systems.

Two synthetic "networks" share the same subject means (class_seed) but see
independent noise, much like two CNNs trained on the same identities. Their
min-max normalised chi-square scores are mixed as a*s1 + (1-a)*s2 and the
EER is tracked over a in steps of 0.1.
"""

from periscope.matcher import score_pairs
from periscope.metrics import fusion_sweep
from periscope.protocols import build_galleries, gen_same_pose_pairs
from periscope.synthetic import gen_synthetic_embeddings, gen_synthetic_manifest

pairs = gen_same_pose_pairs(build_galleries(gen_synthetic_manifest(80, 6)), "frontal")
systems = [score_pairs(gen_synthetic_embeddings(80, 6, 32, 1.0, 1.0, seed=s, class_seed=11),
                       pairs, "chi2") for s in (1, 2)]

result = fusion_sweep(*systems)
for a, e in zip(result.weights, result.eers):
    bar = "#" * int(round(e))
    print(f"a={a:.1f}  EER {e:6.3f}%  {bar}")
print(f"best a = {result.best_a:.1f}, EER {result.best_eer:.3f}%")
