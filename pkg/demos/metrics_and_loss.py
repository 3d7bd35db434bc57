"""
Metrics and loss
================

Confusion counts, the five reported scores, and the BCE + Dice objective.
"""

import numpy as np

from aspvmunet.numerics import Tensor
from aspvmunet.pipeline import bce_dice_loss, compute_metrics

rng = np.random.default_rng(1)
target = (rng.random((64, 64)) < 0.3).astype(np.uint8)
pred = np.clip(target + rng.normal(0, 0.4, target.shape), 0, 1)

m = compute_metrics(pred, target)
print(m.tp, m.fp, m.tn, m.fn)
print(m.report())

# MIoU here is foreground IoU, so DSC follows from it.
print("2m/(1+m) =", 2 * m.miou / (1 + m.miou), " dsc =", m.dsc)

# Counts add up, which is how a dataset gets micro-averaged.
total = m + compute_metrics(target.astype(float), target)
print(total.report())

# Loss on a batch of two: the noisy prediction and its inverse, which scores far worse.
p = Tensor(np.stack([pred, 1 - pred])[:, None].astype(np.float32), requires_grad=True)
y = np.stack([target, target])[:, None]
loss = bce_dice_loss(p, y)
loss.backward()
print("loss", float(loss.data), "grad norm", float(np.linalg.norm(p.grad)))
