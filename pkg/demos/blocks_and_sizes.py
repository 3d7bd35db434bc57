"""
Blocks and parameter budgets
============================

Build the parallel Mamba layers and the full network, then look at where
the parameters go.
"""

import numpy as np

from aspvmunet.blocks import APVM, ASPVM, ASPBlock, BlockConfig
from aspvmunet.network import NetworkConfig, ablation_table, build, count_flops, parameter_breakdown
from aspvmunet.numerics import Tensor
from aspvmunet.scan import ScanSpec
from aspvmunet.ssm import count_core_parameters

rng = np.random.default_rng(0)

# Splitting 384 channels into four segments that share one Mamba core.
pvm = APVM(384, ScanSpec(step=1), rng=rng)
full = count_core_parameters(384)
print(f"full Mamba {full:,}  PVM {pvm.num_parameters():,}  saved {100 * (1 - pvm.num_parameters() / full):.1f}%")

# The shifted variant rotates channels by C/8 first; same parameter count.
aspvm = ASPVM(384, ScanSpec(step=2), rng=rng)
print("ASPVM params:", aspvm.num_parameters())

# One ASP block on a small feature map.
blk = ASPBlock(BlockConfig(32, atrous_step=2), rng=rng)
x = Tensor(rng.standard_normal((1, 32, 8, 8)).astype(np.float32))
print("ASP block output:", blk(x).shape)

# Whole networks.
for cfg in (NetworkConfig.tiny(input_size=(64, 64)), NetworkConfig.base()):
    net = build(cfg)
    print(f"\n{cfg.variant}: {net.num_parameters():,} params, {count_flops(net) / 1e9:.3f} GMAC")
    for group, n in parameter_breakdown(net).items():
        print(f"  {group:<16}{n:>10,}")

# Larger atrous steps add one input projection per extra sequence.
for S in (1, 2, 4, 8):
    net = build(NetworkConfig.base(atrous_step=S))
    print(f"S={S}: {net.num_parameters():,}")

print()
for row in ablation_table(NetworkConfig.tiny()):
    print(f"{row['row']:<14}{row['params']:>10,}")
