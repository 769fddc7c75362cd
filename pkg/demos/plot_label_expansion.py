"""
Expanding 20 annotations to whole objects
=========================================

Twenty labeled points are spread across the fused masks that contain them.
Reliable pseudo labels then fill masks the annotations never reached,
provided the modal pseudo label covers more than ``eta`` of the mask.
"""

import numpy as np

from masklift.core import IGNORE
from masklift.evaluation import label_stats
from masklift.labels import RELIABLE, init_labels, propagate, propagate_branches
from masklift.pipeline import RunConfig, lift_scene, scene_stack
from masklift.reliability import split_reliable
from masklift.synth import SynthSpec, generate_scene

###########################################################################
# A ten point mask with eight reliable labels of class 3 and one
# annotation of class 1. At eta = 0.7 the pseudo labels win (8/10 > 0.7);
# at eta = 0.9 the mask falls back to the annotation.

mask = np.ones((1, 10), dtype=bool)
Yr = np.array([3] * 8 + [IGNORE] * 2)
Y = np.array([IGNORE] * 9 + [1])
print(propagate(Y, Yr, mask, 0.7))
print(propagate(Y, Yr, mask, 0.9))

###########################################################################
# On a synthetic room. The stand-in predictor is seeded from the 20 sparse
# labels, and points it is confident about become reliable pseudo labels.

cfg = RunConfig()
bundle = generate_scene(SynthSpec(seed=1)).bundle
masks, _, _ = lift_scene(bundle, cfg)
init = init_labels(bundle.sparse, masks)
split = split_reliable(scene_stack(bundle, bundle.sparse, cfg), cfg.tau, cfg.kappa)
expanded, branch = propagate_branches(bundle.sparse, split.hard, masks, cfg.eta)

###########################################################################
# Counts and accuracy against ground truth, from the sparse input to the
# final expanded labels.

for name, labels in [("sparse", bundle.sparse), ("init", init),
                     ("reliable", split.hard), ("expanded", expanded)]:
    s = label_stats(labels, bundle.gt)
    print(f"{name:>9}: {s.count:6d} labels, accuracy {100 * s.accuracy:5.1f}%")
print("masks filled from pseudo labels:", int(np.count_nonzero(branch == RELIABLE)))
