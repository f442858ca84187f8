#!/usr/bin/env python3
"""Walkthrough: comparing scorers against human judgment. A scorer that
tracks human labels shows strong Pearson/Spearman correlation; an unrelated
one does not. The embedding-cosine baseline is compared on the same scale.

Run: python demos/04_correlation_analysis.py
"""

import numpy as np

from mtf import PairedSample, cosine_similarity, pearson, spearman

rng = np.random.default_rng(7)
n = 100

ids = tuple(f"pair-{i:03d}" for i in range(n))
human = rng.uniform(5, 95, size=n)

print(f"{n} pairs with human quality labels\n")


def report(name, model_scores):
    sample = PairedSample(ids=ids, human=human, model=model_scores)
    p = pearson(sample)
    s = spearman(sample)
    flag = lambda r: "*" if r.p_value < 0.05 else " "
    print(f"{name:>22}:  pearson {p.coefficient:+.3f}{flag(p)}   spearman {s.coefficient:+.3f}{flag(s)}")


# a scorer that sees what humans see, with noise
aligned = np.clip(human + rng.normal(scale=12.0, size=n), 0, 100)
report("aligned scorer", aligned)

# a scorer that captures the ranking but compresses the scale
compressed = 40 + 20 * (human / 100) ** 2 + rng.normal(scale=2.0, size=n)
report("compressed scorer", compressed)

# an unrelated scorer
report("unrelated scorer", rng.uniform(0, 100, size=n))

# an embedding-cosine baseline: image/text vectors whose angle widens as the
# human score drops, scaled to 0..100 before pairing
angles = (1 - human / 100) * (np.pi / 2) + rng.normal(scale=0.15, size=n)
cosines = []
for a in angles:
    u = np.array([1.0, 0.0])
    v = np.array([np.cos(a), np.sin(a)])
    cosines.append(100.0 * max(0.0, cosine_similarity(u, v)))
report("cosine baseline", np.array(cosines))

print("\n* marks p < 0.05 under the two-tailed t approximation.")
print("Spearman ignores the compressed scale; Pearson penalizes it.")
