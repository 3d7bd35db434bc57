"""Scan plans: how a 2D patch grid becomes a stack of 1D sequences.

A plan is fixed by three choices.  The sampling is global or atrous with
step S: the grid is padded bottom/right to a multiple of S and split into
S² interleaved sub-images.  The mode is always the row-major raster here.
The direction is the start corner and orientation of that raster.

Patch (r, c) of the padded grid belongs to sub-image (r mod S, c mod S) at
local position (r div S, c div S).  Sub-images are ordered row-major by
(r mod S, c mod S).  Every plan is a bijection between the padded grid and
its (sequence, position) slots, so ``invert_plan(apply_plan(x))`` is exact.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

from .numerics import DimensionError, Tensor
from .numerics import functional as F

DIRECTIONS = ("tl-h", "tl-v", "br-h", "br-v", "tr-h", "tr-v", "bl-h", "bl-v")
ACROSS_DIRECTIONS = ("tl-h", "tl-v", "br-h", "br-v")
# top-row sub-images scan horizontally, bottom-row ones vertically
EFFICIENT_DIRECTIONS = ("tl-h", "tl-h", "tl-v", "tl-v")
SCAN_METHODS = ("vallian", "atrous", "across", "efficient")


def compute_padding(H: int, W: int, S: int) -> tuple[int, int]:
    """Smallest bottom/right padding making both extents divisible by ``S``."""
    if min(H, W, S) < 1:
        raise ValueError(f"H, W, S must be >= 1, got {(H, W, S)}")
    return (-H) % S, (-W) % S


def raster(h: int, w: int, direction: str = "tl-h") -> np.ndarray:
    """Flat indices (row-major ids of an h×w grid) in the visiting order of ``direction``."""
    grid = np.arange(h * w).reshape(h, w)
    if direction not in DIRECTIONS:
        raise ValueError(f"unknown scan direction {direction!r}; expected one of {DIRECTIONS}")
    corner, orient = direction.split("-")
    if corner in ("br", "bl"):
        grid = grid[::-1]
    if corner in ("br", "tr"):
        grid = grid[:, ::-1]
    return (grid if orient == "h" else grid.T).reshape(-1).copy()


@dataclass(frozen=True, eq=False)
class ScanPlan:
    H: int
    W: int
    S: int
    P_H: int
    P_W: int
    forward: np.ndarray = field(repr=False)  # (n_seq, seq_len) padded-grid flat indices
    directions: tuple[str, ...] = ()

    @property
    def Hp(self) -> int:
        return self.H + self.P_H

    @property
    def Wp(self) -> int:
        return self.W + self.P_W

    @property
    def n_seq(self) -> int:
        return self.forward.shape[0]

    @property
    def seq_len(self) -> int:
        return self.forward.shape[1]

    @cached_property
    def inverse(self) -> np.ndarray:
        """Padded-grid index -> flat slot ``seq * seq_len + pos``."""
        inv = np.empty(self.Hp * self.Wp, dtype=np.intp)
        inv[self.forward.reshape(-1)] = np.arange(self.forward.size)
        return inv

    @cached_property
    def source(self) -> np.ndarray:
        """Like ``forward`` but indexing the unpadded grid; padding slots are -1."""
        r, c = np.divmod(self.forward, self.Wp)
        src = r * self.W + c
        src[(r >= self.H) | (c >= self.W)] = -1
        return src

    @cached_property
    def restore_index(self) -> np.ndarray:
        """For each unpadded grid cell (row-major), its flat slot in the stacked sequences."""
        r, c = np.divmod(np.arange(self.H * self.W), self.W)
        return self.inverse[r * self.Wp + c]

    def padding_mask(self) -> np.ndarray:
        return self.source < 0


def _atrous_forward(H: int, W: int, S: int, directions: tuple[str, ...]) -> np.ndarray:
    P_H, P_W = compute_padding(H, W, S)
    Hp, Wp = H + P_H, W + P_W
    hs, ws = Hp // S, Wp // S
    seqs = []
    for k, (a, b) in enumerate((a, b) for a in range(S) for b in range(S)):
        local = raster(hs, ws, directions[k])
        i, j = np.divmod(local, ws)
        seqs.append((a + S * i) * Wp + (b + S * j))
    return np.stack(seqs)


@lru_cache(maxsize=512)
def build_atrous_plan(H: int, W: int, S: int, direction: str = "tl-h") -> ScanPlan:
    """Atrous sampling with one raster direction inside every sub-image."""
    P_H, P_W = compute_padding(H, W, S)
    dirs = (direction,) * (S * S)
    return ScanPlan(H, W, S, P_H, P_W, _atrous_forward(H, W, S, dirs), dirs)


@lru_cache(maxsize=512)
def build_subimage_plan(H: int, W: int, S: int, directions: tuple[str, ...]) -> ScanPlan:
    """Atrous sampling with an explicit direction per sub-image."""
    if len(directions) != S * S:
        raise ValueError(f"need {S * S} per-sub-image directions, got {len(directions)}")
    P_H, P_W = compute_padding(H, W, S)
    return ScanPlan(H, W, S, P_H, P_W, _atrous_forward(H, W, S, tuple(directions)), tuple(directions))


def build_global_plan(H: int, W: int, direction: str = "tl-h") -> ScanPlan:
    return build_atrous_plan(H, W, 1, direction)


def build_across_plan(H: int, W: int, S: int = 1) -> tuple[ScanPlan, ...]:
    """The four-direction cross scan, optionally inside atrous sub-images."""
    return tuple(build_atrous_plan(H, W, S, d) for d in ACROSS_DIRECTIONS)


def build_efficient_plan(H: int, W: int) -> ScanPlan:
    """S=2 sampling; the two top sub-images run horizontally, the two bottom ones vertically."""
    return build_subimage_plan(H, W, 2, EFFICIENT_DIRECTIONS)


@dataclass(frozen=True)
class ScanSpec:
    """Sampling × mode × direction choice for one Atrous Mamba block.

    ``step`` 1 is global sampling.  ``per_subimage_directions`` overrides
    ``directions`` with one entry per sub-image (used for the efficient scan).
    """

    step: int = 1
    directions: tuple[str, ...] = ("tl-h",)
    per_subimage_directions: tuple[str, ...] | None = None
    mode: str = "vallian"

    def __post_init__(self):
        if self.step < 1:
            raise ValueError(f"atrous step must be >= 1, got {self.step}")
        if self.mode != "vallian":
            raise ValueError(f"only the vallian scan mode is supported, got {self.mode!r}")
        if not self.directions or len(set(self.directions)) != len(self.directions) or len(self.directions) > 8:
            raise ValueError(f"directions must be 1..8 distinct entries, got {self.directions}")
        for d in self.directions:
            if d not in DIRECTIONS:
                raise ValueError(f"unknown scan direction {d!r}")
        if self.per_subimage_directions is not None and len(self.per_subimage_directions) != self.step**2:
            raise ValueError(f"per_subimage_directions needs {self.step ** 2} entries")

    @classmethod
    def from_method(cls, method: str, step: int = 2) -> "ScanSpec":
        if method in ("vallian", "atrous"):
            return cls(step=step)
        if method == "across":
            return cls(step=step, directions=ACROSS_DIRECTIONS)
        if method == "efficient":
            return cls(step=2, per_subimage_directions=EFFICIENT_DIRECTIONS)
        raise ValueError(f"unknown scan method {method!r}; expected one of {SCAN_METHODS}")

    @property
    def n_sequences(self) -> int:
        """Sequences per image, i.e. the number of per-sequence input projections."""
        if self.per_subimage_directions is not None:
            return self.step**2
        return len(self.directions) * self.step**2

    def plans(self, H: int, W: int) -> tuple[ScanPlan, ...]:
        if self.per_subimage_directions is not None:
            return (build_subimage_plan(H, W, self.step, tuple(self.per_subimage_directions)),)
        return tuple(build_atrous_plan(H, W, self.step, d) for d in self.directions)


# -- applying plans to tensors ----------------------------------------------------


def _as_rows(x: Tensor, plan: ScanPlan) -> tuple[Tensor, bool]:
    if x.ndim == 4:
        if x.shape[2:] != (plan.H, plan.W):
            raise DimensionError(f"input spatial extents {x.shape[2:]} != plan extents {(plan.H, plan.W)}")
        B, C = x.shape[:2]
        return F.reshape(F.transpose(x, (0, 2, 3, 1)), (B, plan.H * plan.W, C)), True
    if x.ndim == 3:
        if x.shape[1] != plan.H * plan.W:
            raise DimensionError(f"sequence length {x.shape[1]} != plan grid {plan.H}x{plan.W}")
        return x, False
    raise DimensionError(f"expected B×C×H×W or B×L×C input, got {x.shape}")


def apply_plan(x: Tensor, plan: ScanPlan, stack: str = "batch") -> Tensor:
    """Gather ``x`` (B×C×H×W or B×HW×C) into stacked sequences B·n_seq × L × C.

    Padding slots are zero.  With ``stack="batch"`` the sequences of one batch
    element are contiguous; ``stack="sequence"`` groups by sequence instead.
    """
    rows, _ = _as_rows(x, plan)
    B, _, C = rows.shape
    g = F.take_rows(rows, plan.source.reshape(-1))
    g = F.reshape(g, (B, plan.n_seq, plan.seq_len, C))
    if stack == "sequence":
        g = F.transpose(g, (1, 0, 2, 3))
    elif stack != "batch":
        raise ValueError(f"unknown stack order {stack!r}")
    return F.reshape(g, (B * plan.n_seq, plan.seq_len, C))


def invert_plan(y: Tensor, plan: ScanPlan, layout: str = "image", stack: str = "batch") -> Tensor:
    """Scatter stacked sequences back to the grid and drop the padding.

    Returns B×C×H×W for ``layout="image"`` or B×HW×C for ``layout="sequence"``.
    """
    if y.ndim != 3 or y.shape[1] != plan.seq_len or y.shape[0] % plan.n_seq:
        raise DimensionError(
            f"stacked sequences {y.shape} do not match plan ({plan.n_seq} sequences of length {plan.seq_len})"
        )
    C = y.shape[2]
    B = y.shape[0] // plan.n_seq
    if stack == "sequence":
        y = F.transpose(F.reshape(y, (plan.n_seq, B, plan.seq_len, C)), (1, 0, 2, 3))
    rows = F.take_rows(F.reshape(y, (B, plan.n_seq * plan.seq_len, C)), plan.restore_index)
    if layout == "sequence":
        return rows
    return F.transpose(F.reshape(rows, (B, plan.H, plan.W, C)), (0, 3, 1, 2))


def scan_order(method: str, H: int, W: int, S: int = 1) -> list[list[int]]:
    """Rows of padded-grid flat indices, one per sequence; padding slots are -1."""
    if method == "vallian":
        plans = (build_global_plan(H, W),)
    else:
        plans = ScanSpec.from_method(method, S).plans(H, W)
    rows = []
    for p in plans:
        order = np.where(p.padding_mask(), -1, p.forward)
        rows.extend(order.tolist())
    return rows


def scan_order_csv(method: str, H: int, W: int, S: int = 1) -> str:
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerows(scan_order(method, H, W, S))
    return buf.getvalue()
