"""AdamW with decoupled weight decay, and a closed-form cosine learning-rate schedule."""

from __future__ import annotations

import math
from typing import Sequence

import numpy as np

from .nn import Parameter


def cosine_lr(epoch: int, base_lr: float, t_max: int, eta_min: float) -> float:
    """Cosine annealing from ``base_lr`` at epoch 0 to ``eta_min`` at ``t_max``."""
    return eta_min + (base_lr - eta_min) * (1 + math.cos(math.pi * epoch / t_max)) / 2


class AdamW:
    def __init__(
        self,
        params: Sequence[Parameter],
        lr: float = 1e-3,
        betas: tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
        weight_decay: float = 1e-2,
    ):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.step_count = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        self.step_count += 1
        b1, b2 = self.betas
        c1 = 1 - b1**self.step_count
        c2 = 1 - b2**self.step_count
        for p, m, v in zip(self.params, self.m, self.v):
            if p.grad is None:
                continue
            g = p.grad
            p.data *= 1 - self.lr * self.weight_decay
            m *= b1
            m += (1 - b1) * g
            v *= b2
            v += (1 - b2) * (g * g)
            denom = np.sqrt(v / c2)
            denom += self.eps
            p.data -= (self.lr / c1) * m / denom

    def state_dict(self) -> tuple[dict[str, np.ndarray], dict]:
        arrays = {}
        for i, (m, v) in enumerate(zip(self.m, self.v)):
            arrays[f"m/{i}"] = m
            arrays[f"v/{i}"] = v
        meta = {"step": self.step_count, "lr": self.lr, "betas": list(self.betas), "eps": self.eps, "weight_decay": self.weight_decay}
        return arrays, meta

    def load_state_dict(self, arrays: dict[str, np.ndarray], meta: dict) -> None:
        if len([k for k in arrays if k.startswith("m/")]) != len(self.params):
            raise ValueError(f"optimizer state holds {len(arrays) // 2} slots, model has {len(self.params)} parameters")
        for i, p in enumerate(self.params):
            for name, slots in (("m", self.m), ("v", self.v)):
                a = arrays[f"{name}/{i}"]
                if a.shape != p.data.shape:
                    raise ValueError(f"optimizer slot {name}/{i} has shape {a.shape}, parameter has {p.data.shape}")
                slots[i] = a.astype(p.data.dtype, copy=True)
        self.step_count = int(meta["step"])
        self.lr = float(meta.get("lr", self.lr))
