"""Central finite-difference checks for analytic gradients."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor, no_grad


@dataclass
class GradcheckReport:
    name: str
    max_rel_error: float
    checked: int
    worst: str = ""
    per_tensor: dict[str, float] = field(default_factory=dict)

    def passed(self, tol: float) -> bool:
        return self.max_rel_error < tol


def relative_error(analytic: np.ndarray, numeric: np.ndarray, floor: float = 1e-6) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
    return np.abs(analytic - numeric) / denom


def gradcheck(
    fn: Callable[[], Tensor],
    tensors: Sequence[tuple[str, Tensor]],
    *,
    eps: float = 1e-3,
    max_per_tensor: int | None = None,
    max_tensors: int | None = None,
    seed: int = 0,
    name: str = "",
    floor: float = 1e-6,
) -> GradcheckReport:
    """Compare backward() against Richardson-extrapolated central differences.

    ``fn`` rebuilds the forward graph from the current tensor values and
    returns any-shaped output; it is reduced to a scalar with a fixed random
    projection so every output element contributes.  ``max_per_tensor``
    samples that many entries per tensor instead of perturbing all of them;
    ``max_tensors`` likewise checks a random subset of the tensors (the
    analytic pass still covers all of them).
    """
    rng = np.random.default_rng(seed)
    tensors = list(tensors)
    out = fn()
    proj = rng.standard_normal(out.shape)
    for _, t in tensors:
        t.grad = None
    (out * Tensor(proj.astype(out.dtype))).sum().backward()
    analytic = {n: (t.grad.copy() if t.grad is not None else np.zeros_like(t.data)) for n, t in tensors}

    def loss() -> float:
        with no_grad():
            return float((fn().data * proj).sum())

    worst, worst_at, checked = 0.0, "", 0
    per_tensor: dict[str, float] = {}
    chosen = tensors
    if max_tensors is not None and len(tensors) > max_tensors:
        chosen = [tensors[i] for i in sorted(rng.choice(len(tensors), size=max_tensors, replace=False))]
    for n, t in chosen:
        flat = t.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_per_tensor is not None and flat.size > max_per_tensor:
            idx = rng.choice(flat.size, size=max_per_tensor, replace=False)
        num = np.empty(idx.size)
        for k, i in enumerate(idx):
            orig = flat[i]
            diffs = []
            for h in (eps, eps / 2):
                flat[i] = orig + h
                lp = loss()
                flat[i] = orig - h
                lm = loss()
                diffs.append(lp - lm)
            flat[i] = orig
            # Richardson step cancels the O(eps^2) truncation term
            num[k] = (8 * diffs[1] - diffs[0]) / (6 * eps)
        err = relative_error(analytic[n].reshape(-1)[idx], num, floor)
        checked += idx.size
        per_tensor[n] = float(err.max()) if err.size else 0.0
        if err.size and err.max() > worst:
            worst = float(err.max())
            worst_at = f"{n}[{int(idx[err.argmax()])}]"
    for _, t in tensors:
        t.grad = None
    return GradcheckReport(name=name, max_rel_error=worst, checked=checked, worst=worst_at, per_tensor=per_tensor)
