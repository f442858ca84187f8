#!/usr/bin/env python3
"""Walkthrough: how fraction-based integer thresholds behave on skewed,
uniform, and degenerate score distributions, plus a retention-fraction sweep.

Run: python demos/02_threshold_math.py
"""

from mtf import Histogram101, build_histogram, compute_threshold
from mtf.stats import fraction_sweep

print("Each filter keeps scores >= t; t is chosen so the retained share of the")
print("pool lands closest to the target fraction.\n")

# --- a skewed pool with an exact 30% tail -----------------------------------
h = Histogram101()
for score, n in ((50, 700), (80, 200), (90, 100)):
    for _ in range(n):
        h.add(score)
t = compute_threshold(h, 0.3)
print(f"700@50 / 200@80 / 100@90, fraction 0.3 -> t={t}, retention={h.retention(t):.3f}")
print("  (any t in 51..80 retains the same 300 pairs; the crossing resolves to 80,")
print("   the boundary where one more step would start losing data)\n")

# --- a uniform distribution --------------------------------------------------
uniform = Histogram101(counts=[1] * 101, total=101)
t = compute_threshold(uniform, 0.3)
print(f"uniform over 0..100, fraction 0.3 -> t={t}, retention={uniform.retention(t):.4f}")
print(f"  neighbors: retention(70)={uniform.retention(70):.4f}, retention(72)={uniform.retention(72):.4f}\n")

# --- a degenerate single-score pool ------------------------------------------
spike = build_histogram([60] * 1000)
t = compute_threshold(spike, 0.3)
print(f"all scores 60, fraction 0.3 -> t={t} (keep nothing beats keep everything: "
      f"|0 - 0.3| < |1 - 0.3|)\n")

# --- sweep the operating point -----------------------------------------------
print("fraction sweep on the skewed pool:")
print(f"{'fraction':>9} {'threshold':>10} {'retained':>9}")
for row in fraction_sweep(h):
    print(f"{row.fraction:>9} {row.threshold:>10} {row.retained_count:>9}")
print("\nthresholds fall as the target fraction grows, never the other way.")
