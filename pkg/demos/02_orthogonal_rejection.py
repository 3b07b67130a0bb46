#!/usr/bin/env python3
"""The geometry of orthogonal negative guidance.

Subtracting a negative feature vector wholesale also removes whatever it has
in common with the positive feature. Rejecting the shared direction first
and subtracting only the orthogonal remainder suppresses what is specific to
the negative signal while leaving the positive-aligned component untouched.
"""

import numpy as np

from ong.guidance import GuidanceConfig, orthogonal_guide, plain_guide
from ong.linalg import row_project, row_reject

print("=== projection and rejection on a single row ===")
a = np.array([[1.0, 1.0]])
b = np.array([[1.0, 0.0]])
print(f"a = {a[0]}, b = {b[0]}")
print(f"project(a, b) = {row_project(a, b)[0]}   (the part of a along b)")
print(f"reject(a, b)  = {row_reject(a, b)[0]}   (what remains, orthogonal to b)")

print("\n=== guiding one feature row ===")
z_pos = np.array([[1.0, 0.0]])
z_neg = np.array([[1.0, 1.0]])
cfg = GuidanceConfig(alpha=1.0, mode="orthogonal")
guided = orthogonal_guide(z_pos, z_neg, cfg)
print(f"z_pos = {z_pos[0]}, z_neg = {z_neg[0]}, alpha = 1")
print(f"guided = z_pos - alpha * reject(z_neg, z_pos) = {guided[0]}")
print("the (1, 0) component survives; only the negative-specific (0, 1) part moved")

print("\n=== what the orthogonal form preserves ===")
rng = np.random.default_rng(1)
z_pos = rng.standard_normal((5, 8))
z_neg = rng.standard_normal((5, 8))
cfg = GuidanceConfig(alpha=2.5, mode="orthogonal")
guided = orthogonal_guide(z_pos, z_neg, cfg)
dots_before = (z_pos * z_pos).sum(axis=1)
dots_after = (guided * z_pos).sum(axis=1)
print("per-row <guided, z_pos> vs ||z_pos||^2 (identical => aligned part kept):")
for before, after in zip(dots_before, dots_after):
    print(f"  {after:+.6f}  vs  {before:+.6f}")

print("\n=== orthogonal vs plain subtraction ===")
plain_cfg = GuidanceConfig(alpha=2.5, mode="plain")
plain = plain_guide(z_pos, z_neg, plain_cfg)
d_orth = np.linalg.norm(guided - z_pos, axis=1)
d_plain = np.linalg.norm(plain - z_pos, axis=1)
print("per-row distance moved from z_pos (orthogonal <= plain always):")
for o, p in zip(d_orth, d_plain):
    print(f"  orthogonal {o:6.3f}   plain {p:6.3f}")

print("\n=== the two safety valves ===")
zero_pos = np.zeros((1, 3))
some_neg = np.array([[0.5, -1.0, 2.0]])
out = orthogonal_guide(zero_pos, some_neg, GuidanceConfig(alpha=1.0))
print(f"zero positive row: nothing to preserve, full negative subtracted -> {out[0]}")
parallel = orthogonal_guide(z_pos[:1], 3.0 * z_pos[:1], GuidanceConfig(alpha=4.0))
print(
    "negative parallel to positive: rejection is zero, output untouched ->",
    f"max |change| = {np.abs(parallel - z_pos[:1]).max():.2e}",
)
