#!/usr/bin/env python3
"""Walkthrough: the instruction-dataset construction stages — diversity
selection over caption embeddings, teacher-job emission, score-balanced
sampling, and the 50k multi-task mixture.

Run: python demos/03_curation_workflow.py
"""

import numpy as np

from mtf.curation import (
    DEFAULT_MIXTURE,
    ClusterConfig,
    InstructionRecord,
    SamplerConfig,
    assemble_mixture,
    balanced_sample,
    bucket_index,
    cluster_representatives,
    emit_teacher_jobs,
)
from mtf.core import ImageTextPair, Metric
from mtf.prompts import TeacherPath

rng = np.random.default_rng(0)

# --- 1. diversity selection: one centroid-nearest caption per cluster --------
print("1) clustering caption embeddings (5 planted groups, 400 points)")
centers = rng.normal(scale=8.0, size=(5, 16))
points = np.vstack([c + rng.normal(size=(80, 16)) for c in centers])
reps = cluster_representatives(points, ClusterConfig(k=5, seed=0))
print(f"   representatives (row indices): {reps}")
print(f"   one per planted group: {sorted(r // 80 for r in reps) == [0, 1, 2, 3, 4]}\n")

# --- 2. teacher jobs ----------------------------------------------------------
print("2) teacher jobs for the selected pairs")
pairs = [
    ImageTextPair(id=f"sel-{i}", caption=f"caption {i}",
                  dense_caption="A wide shot of a busy street." if i % 2 else None)
    for i in range(4)
]
jobs = list(emit_teacher_jobs(pairs, (Metric.ITM, Metric.ODF), TeacherPath.TEXT_ONLY))
caption_jobs = [j for j in jobs if j.kind == "dense_caption"]
pending = [j for j in jobs if j.pending]
print(f"   {len(jobs)} jobs total: {len(caption_jobs)} dense-caption prerequisites, "
      f"{len(pending)} scoring jobs pending on them\n")

# --- 3. balance a skewed score distribution -----------------------------------
print("3) score-balanced sampling (skewed toward high scores)")
skewed_scores = np.clip(rng.normal(loc=78, scale=15, size=8000).astype(int), 0, 100)
items = [
    (InstructionRecord(prompt=f"q{i}", output=f"{s}\nbecause", source="itm_scoring",
                       metric=Metric.ITM, score=int(s)), int(s))
    for i, s in enumerate(skewed_scores)
]
before = [0] * 10
for _, s in items:
    before[bucket_index(s)] += 1
selected = balanced_sample(items, SamplerConfig(target_size=1000, seed=0))
after = [0] * 10
for _, s in selected:
    after[bucket_index(s)] += 1
print(f"   bucket sizes before: {before}")
print(f"   bucket sizes after:  {after}  ({len(selected)} kept)\n")

# --- 4. the 50k multi-task mixture ---------------------------------------------
print("4) assembling the 50k instruction mixture")
pools = {
    c.source: [InstructionRecord(prompt=f"{c.source}-{i}", output="...", source=c.source)
               for i in range(c.count + 500)]
    for c in DEFAULT_MIXTURE.pools
}
mixed = assemble_mixture(DEFAULT_MIXTURE, pools, seed=42)
print(f"   mixture size: {len(mixed)}")
shown = {c.source: c.count for c in DEFAULT_MIXTURE.pools}
print(f"   per-source targets: {shown}")
