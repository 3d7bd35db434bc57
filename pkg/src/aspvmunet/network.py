"""The six-stage encoder/decoder, its accounting, and checkpoint files.

Encoder: stage 1 is a plain conv block, stages 2-6 stack ASP blocks, and
consecutive stages are joined by 2×2 max-pool + 1×1 conv.  The decoder
mirrors it with one block per stage and bilinear ×2 + 1×1 conv upsampling.
Skips from stages 1-5 pass SAB then CAB and are added into the decoder.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Any

import numpy as np

from .attention import SkipFusion
from .blocks import APVM, ASPVM, ASPBlock, BlockConfig, CNNBranch, SEBlock, ShiftNoncircular, SKBlock
from .errors import ConfigError, DimensionError
from .numerics import BatchNorm2d, Conv2d, Linear, Module, ModuleList, Tensor, no_grad
from .numerics import functional as F
from .scan import SCAN_METHODS, compute_padding
from .ssm import AtrousMamba, MambaCore

TINY_CHANNELS = (8, 16, 24, 32, 48, 64)
BASE_CHANNELS = (32, 64, 96, 128, 256, 384)
DEFAULT_DEPTHS = (1, 1, 1, 1, 3, 1)
N_STAGES = 6

# reference sizes used by the accounting report
REFERENCE_PARAMS = {"tiny": 0.29e6, "base": 4.69e6}
REFERENCE_PARAMS_BY_STEP = {1: 4.35e6, 2: 4.69e6, 3: 5.27e6, 4: 6.08e6, 8: 11.64e6}
REFERENCE_GFLOPS_BASE = 2.136


@dataclass(frozen=True)
class NetworkConfig:
    stage_channels: tuple[int, ...] = BASE_CHANNELS
    encoder_depths: tuple[int, ...] = DEFAULT_DEPTHS
    decoder_depths: tuple[int, ...] = (1,) * N_STAGES
    in_channels: int = 3
    input_size: tuple[int, int] = (256, 256)
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
    variant: str = "base"

    def __post_init__(self):
        for name in ("stage_channels", "encoder_depths", "decoder_depths", "input_size"):
            object.__setattr__(self, name, tuple(int(v) for v in getattr(self, name)))

    @classmethod
    def tiny(cls, **overrides) -> "NetworkConfig":
        return cls(**{"stage_channels": TINY_CHANNELS, "variant": "tiny", **overrides})

    @classmethod
    def base(cls, **overrides) -> "NetworkConfig":
        return cls(**{"stage_channels": BASE_CHANNELS, "variant": "base", **overrides})

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "NetworkConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown network config keys: {sorted(unknown)}")
        return cls(**d)

    def as_dict(self) -> dict[str, Any]:
        return {k: list(v) if isinstance(v, tuple) else v for k, v in asdict(self).items()}

    def validate(self) -> "NetworkConfig":
        if len(self.stage_channels) != N_STAGES:
            raise ConfigError(f"stage_channels: need {N_STAGES} entries, got {len(self.stage_channels)}")
        if len(self.encoder_depths) != N_STAGES or min(self.encoder_depths) < 1:
            raise ConfigError(f"encoder_depths: need {N_STAGES} positive entries, got {self.encoder_depths}")
        if len(self.decoder_depths) != N_STAGES or min(self.decoder_depths) < 1:
            raise ConfigError(f"decoder_depths: need {N_STAGES} positive entries, got {self.decoder_depths}")
        for k, c in enumerate(self.stage_channels[1:], start=2):
            if c % 8:
                raise ConfigError(f"stage_channels[{k - 1}] = {c}: ASP stages need a multiple of 8")
        if self.stage_channels[0] < 1:
            raise ConfigError("stage_channels[0] must be positive")
        if len(self.input_size) != 2 or any(s % 32 or s < 32 for s in self.input_size):
            raise ConfigError(f"input_size: H and W must be positive multiples of 32, got {self.input_size}")
        if self.scan_method not in SCAN_METHODS:
            raise ConfigError(f"scan_method: {self.scan_method!r} not in {SCAN_METHODS}")
        if self.in_channels < 1:
            raise ConfigError("in_channels must be positive")
        self.block_config(self.stage_channels[-1]).validate()
        return self

    def block_config(self, channels: int) -> BlockConfig:
        return BlockConfig(
            channels=channels,
            atrous_step=self.atrous_step,
            scan_method=self.scan_method,
            theta_init=self.theta_init,
            use_shift_noncircular=self.use_shift_noncircular,
            use_shift_round=self.use_shift_round,
            use_atrous=self.use_atrous,
            use_cnn_branch=self.use_cnn_branch,
            use_se=self.use_se,
            use_sk=self.use_sk,
            se_reduction=self.se_reduction,
            sk_reduction=self.sk_reduction,
        )

    def diff(self, other: "NetworkConfig") -> dict[str, tuple[Any, Any]]:
        a, b = self.as_dict(), other.as_dict()
        return {k: (a[k], b[k]) for k in a if a[k] != b[k]}


class ConvBlock(Module):
    """conv3×3 → BN → GELU."""

    def __init__(self, c_in: int, c_out: int, rng=None):
        super().__init__()
        self.conv = Conv2d(c_in, c_out, 3, padding=1, rng=rng)
        self.bn = BatchNorm2d(c_out)

    def forward(self, x: Tensor) -> Tensor:
        return F.gelu(self.bn(self.conv(x)))


class Downsample(Module):
    def __init__(self, c_in: int, c_out: int, rng=None):
        super().__init__()
        self.proj = Conv2d(c_in, c_out, 1, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.proj(F.max_pool2d(x))


class Upsample(Module):
    def __init__(self, c_in: int, c_out: int, rng=None):
        super().__init__()
        self.proj = Conv2d(c_in, c_out, 1, rng=rng)

    def forward(self, x: Tensor) -> Tensor:
        return self.proj(F.upsample_bilinear2x(x))


class Sequential(ModuleList):
    def forward(self, x):
        for m in self:
            x = m(x)
        return x


class ASPVMUNet(Module):
    def __init__(self, cfg: NetworkConfig, rng: np.random.Generator | None = None):
        super().__init__()
        cfg.validate()
        rng = rng or np.random.default_rng(0)
        self.cfg = cfg
        ch, enc_d, dec_d = cfg.stage_channels, cfg.encoder_depths, cfg.decoder_depths

        self.encoder = ModuleList()
        self.down = ModuleList()
        self.encoder.append(Sequential(ConvBlock(cfg.in_channels if i == 0 else ch[0], ch[0], rng) for i in range(enc_d[0])))
        for k in range(1, N_STAGES):
            self.down.append(Downsample(ch[k - 1], ch[k], rng))
            self.encoder.append(Sequential(ASPBlock(cfg.block_config(ch[k]), rng) for _ in range(enc_d[k])))

        self.skip = SkipFusion(ch[:5], rng)

        # decoder[k] mirrors encoder stage k; up[k] maps stage k+1 -> k
        self.decoder = ModuleList()
        self.up = ModuleList()
        self.decoder.append(Sequential(ConvBlock(ch[0], ch[0], rng) for _ in range(dec_d[0])))
        for k in range(1, N_STAGES):
            self.decoder.append(Sequential(ASPBlock(cfg.block_config(ch[k]), rng) for _ in range(dec_d[k])))
        for k in range(N_STAGES - 1):
            self.up.append(Upsample(ch[k + 1], ch[k], rng))
        self.head = Conv2d(ch[0], 1, 1, rng=rng)

    def encode(self, x: Tensor) -> list[Tensor]:
        feats = [self.encoder[0](x)]
        for k in range(1, N_STAGES):
            feats.append(self.encoder[k](self.down[k - 1](feats[-1])))
        return feats

    def logits(self, x: Tensor) -> Tensor:
        if x.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise DimensionError(f"expected B×{self.cfg.in_channels}×H×W input, got {x.shape}")
        if x.shape[2] % 32 or x.shape[3] % 32:
            raise DimensionError(f"input H, W must be multiples of 32, got {x.shape[2:]}")
        feats = self.encode(x)
        skips = self.skip(feats[:5])
        d = self.decoder[5](feats[5])
        for k in range(N_STAGES - 2, -1, -1):
            d = self.decoder[k](self.up[k](d) + skips[k])
        return self.head(d)

    def forward(self, x: Tensor) -> Tensor:
        return F.sigmoid(self.logits(x))

    def predict(self, images: np.ndarray, batch_size: int = 8) -> np.ndarray:
        """Inference-mode probabilities for a B×C×H×W array."""
        was_training = self.training
        self.eval()
        try:
            with no_grad():
                outs = [self(Tensor(images[i : i + batch_size].astype(self.dtype))).data for i in range(0, len(images), batch_size)]
        finally:
            self.train(was_training)
        return np.concatenate(outs, axis=0)

    @property
    def dtype(self):
        return self.head.weight.dtype


def build(cfg: NetworkConfig, seed: int | np.random.Generator = 0) -> ASPVMUNet:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return ASPVMUNet(cfg, rng)


def count_parameters(net: Module) -> int:
    return net.num_parameters()


# -- accounting ---------------------------------------------------------------------


def parameter_breakdown(net: ASPVMUNet) -> dict[str, int]:
    """Parameters grouped by component kind; groups sum to the total."""
    groups = {
        "mamba_core": 0,
        "scan_projection": 0,
        "pvm_norm_tail": 0,
        "cnn_branch": 0,
        "se": 0,
        "sk": 0,
        "skip_attention": 0,
        "stem_and_stage1": 0,
        "resampling": 0,
        "head": 0,
    }
    seen: set[int] = set()

    def take(group: str, module: Module):
        for _, p in module.named_parameters():
            if id(p) not in seen:
                seen.add(id(p))
                groups[group] += p.size

    for _, m in net.named_modules():
        if isinstance(m, MambaCore):
            take("mamba_core", m)
        elif isinstance(m, AtrousMamba):
            for p in (m.proj_weight, m.proj_bias):
                if id(p) not in seen:
                    seen.add(id(p))
                    groups["scan_projection"] += p.size
    for _, m in net.named_modules():
        if isinstance(m, (APVM, ASPVM, ShiftNoncircular)):
            take("pvm_norm_tail", m)
        elif isinstance(m, CNNBranch):
            take("cnn_branch", m)
        elif isinstance(m, SEBlock):
            take("se", m)
        elif isinstance(m, SKBlock):
            take("sk", m)
    take("skip_attention", net.skip)
    take("stem_and_stage1", net.encoder[0])
    take("stem_and_stage1", net.decoder[0])
    take("resampling", net.down)
    take("resampling", net.up)
    take("head", net.head)
    assert sum(groups.values()) == net.num_parameters()
    return groups


def _core_macs(core: MambaCore, tokens: int) -> int:
    d, di, R, N = core.d_model, core.d_inner, core.dt_rank, core.d_state
    k = core.conv_weight.shape[1]
    per_token = d * 2 * di + di * k + di * (R + 2 * N) + R * di + 2 * di * N + di * d
    return tokens * per_token


def _atrous_macs(m: AtrousMamba, H: int, W: int, include_padding: bool) -> int:
    total = 0
    for plan in m.scan.plans(H, W):
        tokens = plan.Hp * plan.Wp if include_padding else H * W
        total += tokens * m.d_model * m.d_model + _core_macs(m.core, tokens)
    return total


def _pvm_macs(m: Module, H: int, W: int, include_padding: bool) -> int:
    total = H * W * m.channels * m.channels  # tail linear
    if isinstance(m, ShiftNoncircular):
        return total + 3 * _atrous_macs(m.mamba, H, W, include_padding) + 2 * _atrous_macs(m.edge_mamba, H, W, include_padding)
    return total + 4 * _atrous_macs(m.mamba, H, W, include_padding)


def _conv_macs(conv: Conv2d, Ho: int, Wo: int) -> int:
    co, ci_g, k, _ = conv.weight.shape
    return co * ci_g * k * k * Ho * Wo


def _linear_macs(lin: Linear, tokens: int = 1) -> int:
    return tokens * lin.weight.shape[0] * lin.weight.shape[1]


def _asp_macs(blk: ASPBlock, H: int, W: int, include_padding: bool, acc: dict[str, int]) -> None:
    for mamba, cnn, se, sk in ((blk.mamba1, blk.cnn1, blk.se1, blk.sk1), (blk.mamba2, blk.cnn2, blk.se2, blk.sk2)):
        acc["sequence"] += _pvm_macs(mamba, H, W, include_padding)
        branches = 1
        if cnn is not None:
            acc["conv"] += _conv_macs(cnn.dw, H, W) + _conv_macs(cnn.pw, H, W)
            branches = 2
        if se is not None:
            acc["pooled"] += branches * (_linear_macs(se.squeeze) + _linear_macs(se.excite))
        if sk is not None:
            acc["pooled"] += _linear_macs(sk.fc) + _linear_macs(sk.head_global) + _linear_macs(sk.head_local)


def flop_breakdown(net: ASPVMUNet, input_shape: tuple[int, int] | None = None, include_padding: bool = False) -> dict[str, int]:
    """Multiply-accumulate estimate for one image, grouped by cost driver.

    ``conv``: every convolution (stage-1 blocks, resampling projections,
    CNN branches, SAB, head).  ``sequence``: per-token work of the PVM
    layers, i.e. the scan projections, the Mamba core projections, its
    causal conv, the recurrence (two MACs per state element per token) and
    the PVM tail linear.  ``pooled``: the per-image SE, SK and CAB layers.

    Not covered: normalization, activations, pooling, bilinear resampling,
    and elementwise residual/gating arithmetic.  By default the recurrence
    runs over the H·W real tokens; ``include_padding`` counts the
    zero-padded atrous grid instead.
    """
    H, W = input_shape or net.cfg.input_size
    if H % 32 or W % 32:
        raise DimensionError(f"input H, W must be multiples of 32, got {(H, W)}")
    acc = {"conv": 0, "sequence": 0, "pooled": 0}
    for blk in list(net.encoder[0]) + list(net.decoder[0]):
        acc["conv"] += _conv_macs(blk.conv, H, W)
    acc["conv"] += _conv_macs(net.head, H, W)
    for k in range(1, N_STAGES):
        h, w = H >> k, W >> k
        acc["conv"] += _conv_macs(net.down[k - 1].proj, h, w) + _conv_macs(net.up[k - 1].proj, h << 1, w << 1)
        for blk in list(net.encoder[k]) + list(net.decoder[k]):
            _asp_macs(blk, h, w, include_padding, acc)
    for k in range(5):
        acc["conv"] += _conv_macs(net.skip.sab.conv, H >> k, W >> k)
    acc["pooled"] += 3 * sum(net.skip.cab.channels) + sum(_linear_macs(g) for g in net.skip.cab.gates)
    return acc


def count_flops(net: ASPVMUNet, input_shape: tuple[int, int] | None = None, include_padding: bool = False) -> int:
    """Total of :func:`flop_breakdown`."""
    return sum(flop_breakdown(net, input_shape, include_padding).values())


def padding_overhead(cfg: NetworkConfig, input_shape: tuple[int, int] | None = None) -> dict[int, tuple[int, int]]:
    """Per ASP stage: padding (P_H, P_W) of the atrous grid."""
    H, W = input_shape or cfg.input_size
    step = cfg.atrous_step if cfg.use_atrous else 1
    return {k + 1: compute_padding(H >> k, W >> k, step) for k in range(1, N_STAGES)}


ABLATION_ROWS: dict[str, dict[str, bool]] = {
    "none": dict(use_shift_round=False, use_atrous=False, use_cnn_branch=False, use_se=False, use_sk=False),
    "shift": dict(use_shift_round=False, use_shift_noncircular=True, use_atrous=False, use_cnn_branch=False, use_se=False, use_sk=False),
    "sr": dict(use_atrous=False, use_cnn_branch=False, use_se=False, use_sk=False),
    "sr+as": dict(use_cnn_branch=False, use_se=False, use_sk=False),
    "sr+as+cnn": dict(use_se=False, use_sk=False),
    "sr+as+cnn+se": dict(use_sk=False),
    "sr+as+cnn+sk": dict(use_se=False),
    "all": dict(),
}
ABLATION_REFERENCE_PARAMS = {
    "none": 1.75e6,
    "shift": 1.83e6,
    "sr": 1.75e6,
    "sr+as": 2.10e6,
    "sr+as+cnn": 3.06e6,
    "sr+as+cnn+se": 3.27e6,
    "sr+as+cnn+sk": 4.48e6,
    "all": 4.69e6,
}


def ablation_config(row: str, base: NetworkConfig | None = None) -> NetworkConfig:
    if row not in ABLATION_ROWS:
        raise ConfigError(f"unknown ablation row {row!r}; expected one of {list(ABLATION_ROWS)}")
    base = base or NetworkConfig.base()
    flags = dict(use_shift_noncircular=False, use_shift_round=True, use_atrous=True, use_cnn_branch=True, use_se=True, use_sk=True)
    flags.update(ABLATION_ROWS[row])
    return replace(base, **flags)


def ablation_table(base: NetworkConfig | None = None) -> list[dict[str, Any]]:
    base = base or NetworkConfig.base()
    rows = []
    for row in ABLATION_ROWS:
        n = build(ablation_config(row, base)).num_parameters()
        rows.append({"row": row, "params": n, "reference": ABLATION_REFERENCE_PARAMS[row] if base.variant == "base" else None})
    return rows


def accounting_report(base: NetworkConfig | None = None, tiny: NetworkConfig | None = None) -> str:
    """Plain-text parameter/MAC report comparing this build with the reference sizes."""
    base = base or NetworkConfig.base()
    tiny = tiny or NetworkConfig.tiny()
    lines = ["# Parameter and MAC accounting", ""]
    for cfg in (base, tiny):
        net = build(cfg)
        n = net.num_parameters()
        ref = REFERENCE_PARAMS[cfg.variant] if cfg.variant in REFERENCE_PARAMS else None
        rel = f" ({100 * (n - ref) / ref:+.1f}% vs reference {ref / 1e6:.2f}M)" if ref else ""
        lines.append(f"## {cfg.variant}: {n:,} parameters{rel}, {count_flops(net) / 1e9:.3f} GMAC at {cfg.input_size[0]}x{cfg.input_size[1]}")
        for group, size in parameter_breakdown(net).items():
            lines.append(f"  {group:<16} {size:>10,}  {100 * size / n:5.1f}%")
        lines.append("")
    lines.append("## atrous step sweep (base)")
    lines.append(f"  {'S':>2} {'params':>12} {'reference':>10} {'GMAC':>8} {'GMAC+pad':>9}")
    counts = {}
    for S in sorted(REFERENCE_PARAMS_BY_STEP):
        net = build(replace(base, atrous_step=S))
        counts[S] = net.num_parameters()
        lines.append(
            f"  {S:>2} {counts[S]:>12,} {REFERENCE_PARAMS_BY_STEP[S] / 1e6:>9.2f}M {count_flops(net) / 1e9:>8.3f} {count_flops(net, include_padding=True) / 1e9:>9.3f}"
        )
    lines.append(f"  ratio S=8/S=1: {counts[8] / counts[1]:.3f} (reference {REFERENCE_PARAMS_BY_STEP[8] / REFERENCE_PARAMS_BY_STEP[1]:.3f})")
    lines.append("")
    lines.append("## ablation rows (base)")
    for r in ablation_table(base):
        lines.append(f"  {r['row']:<14} {r['params']:>12,} {r['reference'] / 1e6:>9.2f}M")
    lines.append("")
    lines.append("## why the totals differ from the reference")
    lines.append("  Resampling layers, SE/SK hidden widths and the scan projection shapes are not")
    lines.append("  pinned down by the architecture description.  This build uses 2x2 max-pool +")
    lines.append("  1x1 conv down, bilinear x2 + 1x1 conv up, SE hidden width C/16 (floor 4), SK")
    lines.append("  hidden width C/32 (floor 4), and one d x d projection per scanned sequence.")
    lines.append("  Each extra sequence adds d(d+1) per Mamba with d = C/4, so the step sweep grows")
    lines.append("  by (S^2 - 1) times the summed projection size; the reference grows faster,")
    lines.append("  which suggests wider projections there.  MACs count real tokens only, so they")
    lines.append("  stay constant in S; the padded column shows the cost of zero-padding at S=3.")
    lines.append("  The SE/SK widths are the main free knob on the fixed part of the count.  With")
    lines.append("  C/4 for both, the fixed part is so large that the S=8/S=1 ratio drops to about")
    lines.append("  1.94; the narrower widths keep the ratio in the reference band at the cost of a")
    lines.append("  smaller SK share than the ablation rows above imply.")
    return "\n".join(lines) + "\n"


# -- checkpoints ----------------------------------------------------------------------

FORMAT_VERSION = 1


class CheckpointError(RuntimeError):
    pass


@dataclass
class Checkpoint:
    config: NetworkConfig
    epoch: int = 0
    optimizer_state: dict[str, np.ndarray] = field(default_factory=dict)
    optimizer_meta: dict[str, Any] = field(default_factory=dict)
    rng_state: dict[str, Any] | None = None
    extra: dict[str, Any] = field(default_factory=dict)


def save_checkpoint(
    net: ASPVMUNet,
    path: str | Path,
    *,
    epoch: int = 0,
    optimizer_state: dict[str, np.ndarray] | None = None,
    optimizer_meta: dict[str, Any] | None = None,
    rng_state: dict[str, Any] | None = None,
    extra: dict[str, Any] | None = None,
) -> Path:
    """Write an ``.npz`` container; see the README for the layout."""
    path = Path(path)
    meta = {
        "format_version": FORMAT_VERSION,
        "config": net.cfg.as_dict(),
        "epoch": int(epoch),
        "optimizer_meta": optimizer_meta or {},
        "rng_state": rng_state,
        "extra": extra or {},
    }
    arrays = {k: np.asarray(v, dtype="<f4") for k, v in net.state_dict().items()}
    for k, v in (optimizer_state or {}).items():
        arrays[f"optim/{k}"] = np.asarray(v, dtype="<f4")
    arrays["meta"] = np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)
    with open(path, "wb") as fh:
        np.savez(fh, **arrays)
    return path


def load_checkpoint(path: str | Path, expected: NetworkConfig | None = None) -> tuple[ASPVMUNet, Checkpoint]:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"checkpoint not found: {path}")
    try:
        with np.load(path, allow_pickle=False) as z:
            arrays = {k: z[k] for k in z.files}
        meta = json.loads(arrays.pop("meta").tobytes().decode())
    except Exception as exc:
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}") from None
    if meta.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(f"checkpoint format version {meta.get('format_version')} != supported {FORMAT_VERSION}")
    try:
        cfg = NetworkConfig.from_dict(meta["config"])
    except (ConfigError, TypeError) as exc:
        raise CheckpointError(f"checkpoint config unreadable: {exc}") from None
    if expected is not None and expected != cfg:
        diff = "; ".join(f"{k}: checkpoint={a!r} expected={b!r}" for k, (a, b) in cfg.diff(expected).items())
        raise ConfigError(f"checkpoint config mismatch: {diff}")
    net = build(cfg)
    state = {k: v for k, v in arrays.items() if k.startswith(("param/", "buffer/"))}
    try:
        net.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"checkpoint parameters do not match config: {exc}") from None
    optim = {k[len("optim/") :]: v for k, v in arrays.items() if k.startswith("optim/")}
    ckpt = Checkpoint(cfg, meta["epoch"], optim, meta.get("optimizer_meta", {}), meta.get("rng_state"), meta.get("extra", {}))
    return net, ckpt


def stage_shapes(cfg: NetworkConfig, input_shape: tuple[int, int] | None = None) -> list[tuple[int, int, int]]:
    H, W = input_shape or cfg.input_size
    return [(c, H >> k, W >> k) for k, c in enumerate(cfg.stage_channels)]


__all__ = [
    "ASPVMUNet",
    "Checkpoint",
    "CheckpointError",
    "NetworkConfig",
    "ABLATION_ROWS",
    "ablation_config",
    "ablation_table",
    "accounting_report",
    "build",
    "count_flops",
    "count_parameters",
    "flop_breakdown",
    "load_checkpoint",
    "padding_overhead",
    "parameter_breakdown",
    "save_checkpoint",
    "stage_shapes",
]

