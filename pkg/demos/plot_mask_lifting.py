"""
Lifting 2D masks into fused 3D masks
====================================

Each view's 2D id map is pulled back onto the points that link to it,
giving one set of 3D masks per view. The sets are then folded together:
a mask joins the accumulated mask it overlaps most, measured as
intersection over the smaller of the two, when that overlap exceeds
``theta``.
"""

import numpy as np

from masklift.lift import backproject_masks, merge_mask_sets, sample_view_indices
from masklift.geometry import build_link_matrix
from masklift.synth import SynthSpec, generate_scene

###########################################################################
# A small merge by hand: mask A holds points 0-9 and mask B holds points
# 5-14. They share 5 points, so the overlap is 5/10 = 0.5 and they merge.

A = np.zeros((1, 20), dtype=bool)
A[0, :10] = True
B = np.zeros((1, 20), dtype=bool)
B[0, 5:15] = True
merged = merge_mask_sets([A, B], theta=0.3)
print(merged.num_masks, merged.indices(0), merged.provenance)

###########################################################################
# With a threshold above 1 nothing can merge, since the overlap never
# exceeds 1.

print(merge_mask_sets([A, B], theta=1.0).num_masks)

###########################################################################
# On a synthetic room, the 2D masks come from the renderer's object ids.
# Five of the six cameras are picked evenly along the sequence.

scene = generate_scene(SynthSpec(seed=0))
bundle = scene.bundle
idx = sample_view_indices(len(bundle.views), 5)
print("views used:", idx)

per_view = []
for i in idx:
    v = bundle.views[i]
    link = build_link_matrix(bundle.cloud, v.intrinsics, v.pose, v.depth, bundle.delta)
    per_view.append(backproject_masks(v.mask2d, link))
print("masks per view:", [s.shape[0] for s in per_view])

masks = merge_mask_sets(per_view, theta=0.3, view_indices=idx)
print("fused masks:", masks.num_masks)

###########################################################################
# Each fused mask should be one object. Purity is the share of its points
# belonging to its most common object.

for t in range(masks.num_masks):
    obj = scene.object_ids[masks.indices(t)]
    counts = np.bincount(obj)
    print(f"mask {t:2d}: {len(obj):6d} points, object {counts.argmax()}, "
          f"purity {counts.max() / len(obj):.4f}, from {len(masks.provenance[t])} view masks")
