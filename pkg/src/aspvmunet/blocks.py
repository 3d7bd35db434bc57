"""Composite blocks of the encoder/decoder stages.

The ASP block runs two repeats of (Mamba branch ‖ CNN branch) → shared SE →
SK fusion.  Repeat one uses the parallel vision Mamba (APVM), repeat two
the shift-round variant (ASPVM).  Both Mamba branches chunk the channels
into four segments that go through a single Atrous Mamba instance.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import ConfigError, DimensionError
from .numerics import BatchNorm2d, Conv2d, LayerNorm, Linear, Module, Parameter, Tensor
from .numerics import functional as F
from .scan import ScanSpec
from .ssm import AtrousMamba


@dataclass(frozen=True)
class BlockConfig:
    channels: int
    segments: int = 4
    atrous_step: int = 2
    scan_method: str = "atrous"
    theta_init: float = 1.0
    use_shift_noncircular: bool = False
    use_shift_round: bool = True
    use_atrous: bool = True
    use_cnn_branch: bool = True
    use_se: bool = True
    use_sk: bool = True
    se_reduction: int = 16
    sk_reduction: int = 32

    def validate(self) -> "BlockConfig":
        if self.channels % 8:
            raise ConfigError(f"channels must be divisible by 8, got {self.channels}")
        if self.segments != 4:
            raise ConfigError(f"segments is fixed at 4, got {self.segments}")
        if self.use_shift_noncircular and self.use_shift_round:
            raise ConfigError("use_shift_noncircular and use_shift_round are mutually exclusive")
        if self.atrous_step < 1:
            raise ConfigError(f"atrous_step must be >= 1, got {self.atrous_step}")
        if self.se_reduction < 1 or self.sk_reduction < 1:
            raise ConfigError("reductions must be >= 1")
        self.scan_spec()
        return self

    def scan_spec(self) -> ScanSpec:
        step = self.atrous_step if self.use_atrous else 1
        try:
            return ScanSpec.from_method(self.scan_method, step)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    def as_dict(self) -> dict:
        return asdict(self)


def hidden_width(channels: int, reduction: int, floor: int = 4) -> int:
    return max(channels // reduction, floor)


def to_sequence(x: Tensor) -> tuple[Tensor, tuple[int, int] | None]:
    if x.ndim == 4:
        B, C, H, W = x.shape
        return F.reshape(F.transpose(x, (0, 2, 3, 1)), (B, H * W, C)), (H, W)
    if x.ndim == 3:
        return x, None
    raise DimensionError(f"expected B×C×H×W or B×L×C, got {x.shape}")


def to_image(seq: Tensor, hw: tuple[int, int]) -> Tensor:
    B, _, C = seq.shape
    return F.transpose(F.reshape(seq, (B, hw[0], hw[1], C)), (0, 3, 1, 2))


def _grid(seq: Tensor, hw: tuple[int, int] | None) -> tuple[int, int]:
    if hw is not None:
        return hw
    side = math.isqrt(seq.shape[1])
    if side * side != seq.shape[1]:
        raise DimensionError(f"sequence length {seq.shape[1]} is not a square grid")
    return side, side


def stack_segments(y: Tensor, n: int) -> Tensor:
    """B×L×C -> nB×L×(C/n), segment-major along the batch axis."""
    return F.concat(F.chunk(y, n, axis=-1), axis=0)


def unstack_segments(y: Tensor, n: int) -> Tensor:
    return F.concat(F.chunk(y, n, axis=0), axis=-1)


def shift_round(x: Tensor) -> Tensor:
    """Circular left rotation of the channel (last) axis by C/8."""
    C = x.shape[-1]
    if C % 8:
        raise ConfigError(f"shift_round needs channels divisible by 8, got {C}")
    return F.roll(x, -(C // 8), axis=-1)


def shift_round_back(x: Tensor) -> Tensor:
    C = x.shape[-1]
    if C % 8:
        raise ConfigError(f"shift_round_back needs channels divisible by 8, got {C}")
    return F.roll(x, C // 8, axis=-1)


class _ParallelMambaBase(Module):
    """Shared pieces: pre-LN, learnable residual factor, LN→Linear tail."""

    def __init__(self, channels: int, scan: ScanSpec, theta_init: float, rng: np.random.Generator, divisor: int):
        super().__init__()
        if channels % divisor:
            raise ConfigError(f"channels must be divisible by {divisor}, got {channels}")
        self.channels = channels
        self.norm_in = LayerNorm(channels)
        self.theta = Parameter(np.full((1,), theta_init))
        self.norm_out = LayerNorm(channels)
        self.proj = Linear(channels, channels, rng=rng)

    def _tail(self, mixed: Tensor, x_seq: Tensor) -> Tensor:
        return self.proj(self.norm_out(mixed + self.theta * x_seq))

    def _mix(self, y: Tensor, hw: tuple[int, int]) -> Tensor:
        raise NotImplementedError

    def forward(self, x: Tensor, hw: tuple[int, int] | None = None) -> Tensor:
        seq, img_hw = to_sequence(x)
        if seq.shape[-1] != self.channels:
            raise DimensionError(f"expected {self.channels} channels, got {seq.shape[-1]}")
        grid = img_hw or _grid(seq, hw)
        out = self._tail(self._mix(self.norm_in(seq), grid), seq)
        return to_image(out, grid) if img_hw is not None else out


class APVM(_ParallelMambaBase):
    """LN → 4 channel segments through one Atrous Mamba → concat → +θ·x → LN → Linear."""

    def __init__(self, channels: int, scan: ScanSpec | None = None, theta_init: float = 1.0, rng=None):
        rng = rng or np.random.default_rng()
        super().__init__(channels, scan or ScanSpec(), theta_init, rng, 4)
        self.mamba = AtrousMamba(channels // 4, scan or ScanSpec(), rng=rng)

    def _mix(self, y, hw):
        return unstack_segments(self.mamba(stack_segments(y, 4), hw), 4)


class ASPVM(_ParallelMambaBase):
    """APVM with the channel axis rotated by C/8 before chunking and rotated back after."""

    def __init__(self, channels: int, scan: ScanSpec | None = None, theta_init: float = 1.0, rng=None):
        rng = rng or np.random.default_rng()
        super().__init__(channels, scan or ScanSpec(), theta_init, rng, 8)
        self.mamba = AtrousMamba(channels // 4, scan or ScanSpec(), rng=rng)

    def _mix(self, y, hw):
        mixed = unstack_segments(self.mamba(stack_segments(shift_round(y), 4), hw), 4)
        return shift_round_back(mixed)


class ShiftNoncircular(_ParallelMambaBase):
    """Ablation: shift without wrap-around.

    The interior pairs (Y2,Y3), (Y4,Y5), (Y6,Y7) share the main C/4 Mamba;
    the two edge eighths Y1 and Y8 go through a separate C/8 Mamba.
    """

    def __init__(self, channels: int, scan: ScanSpec | None = None, theta_init: float = 1.0, rng=None):
        rng = rng or np.random.default_rng()
        super().__init__(channels, scan or ScanSpec(), theta_init, rng, 8)
        self.mamba = AtrousMamba(channels // 4, scan or ScanSpec(), rng=rng)
        self.edge_mamba = AtrousMamba(channels // 8, scan or ScanSpec(), rng=rng)

    def _mix(self, y, hw):
        e = F.chunk(y, 8, axis=-1)
        interior = F.concat([F.concat([e[1], e[2]], -1), F.concat([e[3], e[4]], -1), F.concat([e[5], e[6]], -1)], 0)
        mid = F.chunk(self.mamba(interior, hw), 3, axis=0)
        edges = F.chunk(self.edge_mamba(F.concat([e[0], e[7]], 0), hw), 2, axis=0)
        return F.concat([edges[0], *mid, edges[1]], axis=-1)


class CNNBranch(Module):
    """Depthwise 3×3 → BN → GELU → 1×1 conv."""

    def __init__(self, channels: int, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng()
        self.dw = Conv2d(channels, channels, 3, padding=1, groups=channels, rng=rng)
        self.bn = BatchNorm2d(channels)
        self.pw = Conv2d(channels, channels, 1, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.pw(F.gelu(self.bn(self.dw(x))))


class SEBlock(Module):
    """LayerNorm + average pool → squeeze/excite → sigmoid channel gates."""

    def __init__(self, channels: int, reduction: int = 16, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng()
        hidden = hidden_width(channels, reduction)
        self.norm = LayerNorm(channels, axis=1)
        self.squeeze = Linear(channels, hidden, rng=rng)
        self.excite = Linear(hidden, channels, rng=rng)

    def attention(self, x: Tensor) -> Tensor:
        if x.ndim == 4:
            pooled = F.global_avg_pool(self.norm(x))
        else:
            pooled = F.mean(F.layer_norm(x, self.norm.weight, self.norm.bias, self.norm.eps, -1), axis=1)
        return F.sigmoid(self.excite(F.gelu(self.squeeze(pooled))))

    def forward(self, x: Tensor) -> Tensor:
        att = self.attention(x)
        shape = (att.shape[0], att.shape[1], 1, 1) if x.ndim == 4 else (att.shape[0], 1, att.shape[1])
        return x * F.reshape(att, shape)


class SKBlock(Module):
    """Per-channel softmax weighting of the global (Mamba) and local (CNN) features."""

    def __init__(self, channels: int, reduction: int = 32, rng=None):
        super().__init__()
        rng = rng or np.random.default_rng()
        hidden = hidden_width(channels, reduction)
        self.fc = Linear(channels, hidden, rng=rng)
        self.head_global = Linear(hidden, channels, rng=rng)
        self.head_local = Linear(hidden, channels, rng=rng)

    def weights(self, g: Tensor, l: Tensor) -> Tensor:
        """B×2×C softmax weights; index 0 is the global branch."""
        if g.shape != l.shape:
            raise DimensionError(f"SK inputs differ in shape: {g.shape} vs {l.shape}")
        s = F.gelu(self.fc(F.global_avg_pool(g + l)))
        logits = F.concat([F.reshape(self.head_global(s), (g.shape[0], 1, -1)), F.reshape(self.head_local(s), (g.shape[0], 1, -1))], 1)
        return F.softmax(logits, axis=1)

    def forward(self, g: Tensor, l: Tensor) -> Tensor:
        w = self.weights(g, l)
        B, C = g.shape[:2]
        wg = F.reshape(w[:, 0], (B, C, 1, 1))
        wl = F.reshape(w[:, 1], (B, C, 1, 1))
        return g * wg + l * wl


class ASPBlock(Module):
    def __init__(self, cfg: BlockConfig, rng=None):
        super().__init__()
        cfg.validate()
        rng = rng or np.random.default_rng()
        self.cfg = cfg
        C, scan = cfg.channels, cfg.scan_spec()
        self.mamba1 = APVM(C, scan, cfg.theta_init, rng)
        if cfg.use_shift_round:
            self.mamba2 = ASPVM(C, scan, cfg.theta_init, rng)
        elif cfg.use_shift_noncircular:
            self.mamba2 = ShiftNoncircular(C, scan, cfg.theta_init, rng)
        else:
            self.mamba2 = APVM(C, scan, cfg.theta_init, rng)
        self.cnn1 = CNNBranch(C, rng) if cfg.use_cnn_branch else None
        self.cnn2 = CNNBranch(C, rng) if cfg.use_cnn_branch else None
        self.se1 = SEBlock(C, cfg.se_reduction, rng) if cfg.use_se else None
        self.se2 = SEBlock(C, cfg.se_reduction, rng) if cfg.use_se else None
        fuse = cfg.use_cnn_branch and cfg.use_sk
        self.sk1 = SKBlock(C, cfg.sk_reduction, rng) if fuse else None
        self.sk2 = SKBlock(C, cfg.sk_reduction, rng) if fuse else None

    @staticmethod
    def _repeat(x, mamba, cnn, se, sk):
        g = mamba(x)
        if se is not None:
            g = se(g)
        if cnn is None:
            return g
        l = cnn(x)
        if se is not None:
            l = se(l)
        return sk(g, l) if sk is not None else g + l

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.cfg.channels:
            raise DimensionError(f"ASPBlock expects B×{self.cfg.channels}×H×W, got {x.shape}")
        y = self._repeat(x, self.mamba1, self.cnn1, self.se1, self.sk1)
        return self._repeat(y, self.mamba2, self.cnn2, self.se2, self.sk2)


def apvm_forward(x: Tensor, block: APVM, hw=None) -> Tensor:
    return block(x, hw)


def aspvm_forward(x: Tensor, block: ASPVM, hw=None) -> Tensor:
    return block(x, hw)


def asp_block_forward(x: Tensor, block: ASPBlock) -> Tensor:
    return block(x)
