"""Skip-path attention shared across the first five encoder stages.

SAB gates every stage spatially with one dilated 7×7 conv.  CAB pools all
five stages, mixes the joint channel vector with a 3-tap conv, and gates
each stage with its own linear layer.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import ConfigError, DimensionError
from .numerics import Conv2d, Linear, Module, ModuleList, Parameter, Tensor
from .numerics import functional as F

N_SKIP_STAGES = 5


class SpatialAttention(Module):
    def __init__(self, rng=None):
        super().__init__()
        self.conv = Conv2d(2, 1, 7, padding=9, dilation=3, rng=rng or np.random.default_rng())

    def attention(self, x: Tensor) -> Tensor:
        pooled = F.concat([F.max(x, axis=1, keepdims=True), F.mean(x, axis=1, keepdims=True)], axis=1)
        return F.sigmoid(self.conv(pooled))

    def forward(self, x: Tensor) -> Tensor:
        return x * self.attention(x) + x


class ChannelAttention(Module):
    def __init__(self, channels: Sequence[int], rng=None):
        super().__init__()
        if len(channels) != N_SKIP_STAGES:
            raise ConfigError(f"channel attention needs {N_SKIP_STAGES} stages, got {len(channels)}")
        rng = rng or np.random.default_rng()
        self.channels = tuple(channels)
        self.conv_weight = Parameter(rng.uniform(-1 / np.sqrt(3), 1 / np.sqrt(3), 3))
        self.conv_bias = Parameter(rng.uniform(-1 / np.sqrt(3), 1 / np.sqrt(3), 1))
        self.gates = ModuleList(Linear(c, c, rng=rng) for c in channels)

    def _mix(self, v: Tensor) -> Tensor:
        """3-tap zero-padded conv along the joint channel vector (B×N)."""
        zero = Tensor(np.zeros((v.shape[0], 1), dtype=v.dtype))
        p = F.concat([zero, v, zero], axis=1)
        n = v.shape[1]
        w = self.conv_weight
        return p[:, 0:n] * w[0] + p[:, 1 : n + 1] * w[1] + p[:, 2 : n + 2] * w[2] + self.conv_bias

    def attention(self, feats: Sequence[Tensor]) -> list[Tensor]:
        self._check(feats)
        mixed = self._mix(F.concat([F.global_avg_pool(f) for f in feats], axis=1))
        parts = F.split(mixed, list(self.channels), axis=1)
        return [F.sigmoid(gate(p)) for gate, p in zip(self.gates, parts)]

    def forward(self, feats: Sequence[Tensor]) -> list[Tensor]:
        out = []
        for f, att in zip(feats, self.attention(feats)):
            out.append(f * F.reshape(att, (*att.shape, 1, 1)) + f)
        return out

    def _check(self, feats):
        if len(feats) != N_SKIP_STAGES:
            raise ConfigError(f"channel attention needs {N_SKIP_STAGES} stages, got {len(feats)}")
        got = tuple(f.shape[1] for f in feats)
        if got != self.channels:
            raise DimensionError(f"stage channels {got} != configured {self.channels}")


class SkipFusion(Module):
    """SAB on each stage with one shared kernel, then CAB across all five."""

    def __init__(self, channels: Sequence[int], rng=None):
        super().__init__()
        rng = rng or np.random.default_rng()
        self.sab = SpatialAttention(rng)
        self.cab = ChannelAttention(channels, rng)

    def forward(self, feats: Sequence[Tensor]) -> list[Tensor]:
        return self.cab([self.sab(f) for f in feats])


def sab(x: Tensor, shared: SpatialAttention) -> Tensor:
    return shared(x)


def cab(bundle: Sequence[Tensor], shared: ChannelAttention) -> list[Tensor]:
    return shared(bundle)
