"""
Separating reliable from ambiguous predictions
==============================================

The predictor runs on the cloud and on ``K`` randomly transformed copies.
A point is reliable when some class has a high mean probability and a low
variance across those runs.
"""

import numpy as np

from masklift.core import IGNORE, PointCloud
from masklift.reliability import AugmentParams, PredictionStack, build_stack, split_reliable

###########################################################################
# By hand: two runs give (0.9, 0.1) and (0.8, 0.2). The mean is
# (0.85, 0.15) and both variances are 0.0025, so with tau = 0.8 and
# kappa = 0.01 the point is reliable with class 0.

stack = PredictionStack(np.array([[[0.9, 0.1]], [[0.8, 0.2]]]))
s = split_reliable(stack, tau=0.8, kappa=0.01)
print(s.reliable, s.hard, s.soft)

###########################################################################
# A random cloud with a handful of labeled seeds. Points near a seed get
# confident predictions; points between seeds of different classes do not.

rng = np.random.default_rng(0)
cloud = PointCloud(rng.random((2000, 3)) * 2)
seeds = np.full(2000, IGNORE)
seeds[:12] = np.arange(12) % 3
stack = build_stack(cloud, seeds, K=2, aug_seed=0, num_classes=3)
print("stack shape:", stack.probs.shape)

###########################################################################
# Tightening either threshold can only shrink the reliable set.

for tau, kappa in [(0.6, 0.05), (0.9, 0.01), (0.99, 0.001)]:
    r = split_reliable(stack, tau, kappa).reliable
    print(f"tau={tau:<5} kappa={kappa:<6} reliable {r.mean():.3f}")

###########################################################################
# Rotations preserve distances, so a nearest-seed predictor gives the same
# answer on a rotated copy when no jitter is added.

rot = [AugmentParams(rotation=(0.3, -0.2, 1.0))]
same = build_stack(cloud, seeds, K=1, num_classes=3, params=rot)
print("max slice difference:", np.abs(same.probs[1] - same.probs[0]).max())
