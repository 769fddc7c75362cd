"""
Loss kernels and their gradients
================================

The training objective combines cross-entropy on the sparse labels, terms
tying augmented predictions to reliable and ambiguous targets, and a
noise-robust pair on the expanded labels. All kernels take probabilities
and return a value with its gradient.
"""

import numpy as np

from masklift.losses import LossWeights, ce, kl, nce, rce, total_loss
from masklift.reliability import PredictionStack, split_reliable

###########################################################################
# Uniform predictions over four classes give ln 4 for cross-entropy, 1/4
# for the normalized variant and 3 for the reverse variant, with
# ``log 0`` taken as -4.

y = np.array([0, 1, 2, 3])
U = np.full((4, 4), 0.25)
print(ce(y, U)[0], nce(y, U)[0], rce(y, U)[0])
print(kl(np.array([[1.0, 0.0]]), np.array([[0.5, 0.5]]))[0])

###########################################################################
# Summed over every possible label, the normalized loss is always 1 and the
# reverse loss is always the same constant. That symmetry is what makes
# the pair tolerant of wrong labels.

rng = np.random.default_rng(0)
row = rng.dirichlet(np.ones(6))[None]
print(sum(nce(np.array([j]), row)[0] for j in range(6)))
print(sum(rce(np.array([j]), row)[0] for j in range(6)) / 6, 4 * 5 / 6)

###########################################################################
# A central difference check of the cross-entropy gradient, along a
# direction that stays on the probability simplex.

P = rng.dirichlet(np.ones(5), size=3)
labels = np.array([4, 0, 2])
_, g = ce(labels, P)
d = rng.normal(size=P.shape)
d -= d.mean(axis=1, keepdims=True)
h = 1e-6
fd = (ce(labels, P + h * d)[0] - ce(labels, P - h * d)[0]) / (2 * h)
print(fd, (g * d).sum())

###########################################################################
# The full weighted objective over a prediction stack. Doubling a weight
# adds exactly one more copy of that term.

z = rng.normal(size=(1, 50, 4)) * 3 + rng.normal(size=(3, 50, 4)) * 0.5
stack = PredictionStack(np.exp(z) / np.exp(z).sum(axis=2, keepdims=True))
split = split_reliable(stack, tau=0.7, kappa=0.02)
Y = np.full(50, -1)
Y[:5] = rng.integers(0, 4, 5)
Ytilde = rng.integers(0, 4, 50)
report = total_loss(Y, Ytilde, split, stack, LossWeights())
print(report.to_dict())
print(total_loss(Y, Ytilde, split, stack, LossWeights(r=2.0)).value - report.value, report.terms["r"])
