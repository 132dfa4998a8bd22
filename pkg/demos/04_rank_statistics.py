"""Compare classifiers across blocks: Friedman test, Nemenyi post-hoc and a
critical-difference diagram.

    python demos/04_rank_statistics.py
"""
import numpy as np

from mmpred import plots
from mmpred.evaluation import (
    cd_diagram_data, critical_difference, friedman_test, nemenyi_posthoc, rank_matrix,
)

# the hand example: one classifier always best, N=4, k=3
stat, p = friedman_test([[0.9, 0.8, 0.7]] * 4)
print(f"hand example: chi2={stat:g}, p={p:.4f}")

# AUPRC of 7 models on 20 bootstrap blocks, with a built-in ordering plus noise
names = ["Static", "Labs", "Meds", "Text", "EF", "LF", "IF"]
rng = np.random.default_rng(1)
skill = np.array([0.55, 0.60, 0.52, 0.66, 0.62, 0.68, 0.72])
scores = skill + rng.normal(scale=0.04, size=(20, len(names)))

rm = rank_matrix(scores, names)
stat, p = friedman_test(scores)
cd = critical_difference(len(names), len(scores))
print(f"Friedman chi2={stat:.2f}, p={p:.2e}, CD={cd:.3f}")
for n, r in sorted(zip(names, rm.mean_ranks), key=lambda t: t[1]):
    print(f"  {n:>6}: mean rank {r:.2f}")
pv = nemenyi_posthoc(scores)
print("Nemenyi p(IF vs Static) =", round(float(pv[names.index("IF"), 0]), 4))

plots.write("cd_demo.svg", plots.cd_diagram(cd_diagram_data(rm.mean_ranks, cd, names), "AUPRC"))
print("wrote cd_demo.svg")
