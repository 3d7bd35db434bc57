"""
Atrous scan orders
==================

How a patch grid turns into 1D sequences, and back.
"""

import numpy as np

from aspvmunet.numerics import Tensor
from aspvmunet.scan import ScanSpec, apply_plan, build_atrous_plan, invert_plan, scan_order

# A 4x4 grid sampled with step 2 gives four interleaved sub-images.
# Each row below is one sequence of flat grid indices.
for row in scan_order("atrous", 4, 4, 2):
    print(row)

# The efficient scan keeps the same sub-images but walks the last two
# column by column instead of row by row.
print()
for row in scan_order("efficient", 4, 4, 2):
    print(row)

# Odd sizes get zero padding on the bottom/right; -1 marks a padding slot.
print()
plan = build_atrous_plan(5, 5, 2)
print(f"5x5 grid padded to {plan.Hp}x{plan.Wp}")
for row in scan_order("atrous", 5, 5, 2):
    print(row)

# Applying a plan and inverting it restores the feature map exactly.
x = Tensor(np.random.default_rng(0).standard_normal((1, 3, 5, 5)))
seq = apply_plan(x, plan)
print("\nsequences", seq.shape)
print("round trip exact:", np.array_equal(invert_plan(seq, plan).data, x.data))

# A scan spec bundles step and directions; across uses four directions.
spec = ScanSpec.from_method("across", 2)
print("across sequences per image:", spec.n_sequences)
