"""Selective state-space core, the Mamba sequence block, and the Atrous Mamba block.

Discretization follows the usual simplification: ``Ā = exp(Δ·A)`` and
``B̄ = Δ·B``.  The recurrence runs strictly left to right with ``h_0 = 0``::

    h_t = exp(Δ_t A) ⊙ h_{t-1} + (Δ_t B_t) u_t
    y_t = C_t · h_t + D ⊙ u_t
"""

from __future__ import annotations

import math

import numpy as np

from .numerics import DimensionError, Linear, Module, NumericError, Parameter, Tensor, is_grad_enabled
from .numerics import functional as F
from .scan import ScanSpec, apply_plan, invert_plan


CHUNK_ELEMENTS = 1 << 17  # state elements per time chunk; keeps a chunk's temporaries in cache


def _chunk_bounds(L: int, step_size: int) -> list[tuple[int, int]]:
    T = max(1, min(L, CHUNK_ELEMENTS // max(step_size, 1)))
    return [(t0, min(t0 + T, L)) for t0 in range(0, L, T)]


def _chunk_terms(dt, du, A, B):
    """exp(delta*A) and delta*u*B for one chunk; einsum beats broadcasting over the short state axis."""
    dA = np.einsum("lbd,dn->lbdn", dt, A)
    np.exp(dA, out=dA)
    return dA, np.einsum("lbd,lbn->lbdn", du, B)


def _scan_chunk(h0, dA, dBu):
    """Run the recurrence over one chunk in place: dBu becomes the states."""
    dBu[0] += dA[0] * h0
    for t in range(1, dBu.shape[0]):
        dBu[t] += dA[t] * dBu[t - 1]
    return dBu


def selective_scan(u: Tensor, delta: Tensor, A: Tensor, B: Tensor, C: Tensor, D: Tensor | None) -> Tensor:
    """Sequential selective scan.

    Shapes: u, delta (Bt, L, Di); A (Di, N); B, C (Bt, L, N); D (Di,).

    The time axis is processed in cache-sized chunks.  Each chunk's decay
    factors and states are kept for backward only when a gradient is needed.
    """
    Bt, L, Di = u.shape
    N = A.shape[1]
    if delta.shape != u.shape or A.shape[0] != Di or B.shape != (Bt, L, N) or C.shape != (Bt, L, N):
        raise DimensionError(
            f"selective_scan shapes: u{u.shape} delta{delta.shape} A{A.shape} B{B.shape} C{C.shape}"
        )
    # time-major copies so each step reads one contiguous slab
    dt_l = np.ascontiguousarray(delta.data.transpose(1, 0, 2))
    u_l = np.ascontiguousarray(u.data.transpose(1, 0, 2))
    B_l = np.ascontiguousarray(B.data.transpose(1, 0, 2))
    C_l = np.ascontiguousarray(C.data.transpose(1, 0, 2))
    A_d = A.data
    du_l = dt_l * u_l
    bounds = _chunk_bounds(L, Bt * Di * N)
    starts = np.zeros((len(bounds), Bt, Di, N), dtype=du_l.dtype)  # state entering each chunk
    y_l = np.empty((L, Bt, Di), dtype=du_l.dtype)
    parents = (u, delta, A, B, C) if D is None else (u, delta, A, B, C, D)
    keep = is_grad_enabled() and any(p.requires_grad for p in parents)
    saved: list[tuple[np.ndarray, np.ndarray]] = []
    h = starts[0]
    with np.errstate(over="ignore", invalid="ignore"):  # reported below with the timestep
        for k, (t0, t1) in enumerate(bounds):
            starts[k] = h
            dA, dBu = _chunk_terms(dt_l[t0:t1], du_l[t0:t1], A_d, B_l[t0:t1])
            hs = _scan_chunk(h, dA, dBu)
            if not np.isfinite(hs[-1]).all():
                bad = t0 + int(np.argmax(~np.isfinite(hs).reshape(t1 - t0, -1).all(axis=1)))
                raise NumericError(f"selective_scan: non-finite state at timestep {bad}")
            np.einsum("lbdn,lbn->lbd", hs, C_l[t0:t1], out=y_l[t0:t1])
            h = hs[-1]
            if keep:
                saved.append((dA, hs))
    y = y_l.transpose(1, 0, 2)
    if D is not None:
        y = y + u.data * D.data

    def backward(gy):
        gy_l = np.ascontiguousarray(gy.transpose(1, 0, 2))
        gdt_l = np.empty_like(dt_l)
        gu_l = np.empty_like(u_l)
        gB_l = np.empty_like(B_l)
        gC_l = np.empty_like(C_l)
        gA = np.zeros_like(A_d)
        carry = np.zeros((Bt, Di, N), dtype=dt_l.dtype)  # dL/dh flowing back into the chunk's last state
        for k in range(len(bounds) - 1, -1, -1):
            t0, t1 = bounds[k]
            dA, hs = saved[k]
            # row-vector matmuls; about twice as fast as the equivalent einsum here
            np.matmul(gy_l[t0:t1, :, None, :], hs, out=gC_l[t0:t1, :, None, :])
            gh = np.einsum("lbd,lbn->lbdn", gy_l[t0:t1], C_l[t0:t1])
            gh[-1] += carry
            # walking back, gh_t * dA_t is both the term flowing into gh_{t-1}
            # and (times h_{t-1}) the gradient w.r.t. the exponent delta*A
            g_exp = np.empty_like(gh)
            for t in range(t1 - t0 - 1, 0, -1):
                np.multiply(gh[t], dA[t], out=g_exp[t])
                gh[t - 1] += g_exp[t]
            np.multiply(gh[0], dA[0], out=g_exp[0])
            carry = g_exp[0].copy()
            g_exp[0] *= starts[k]
            g_exp[1:] *= hs[:-1]
            gA += np.einsum("lbdn,lbd->dn", g_exp, dt_l[t0:t1])
            gdu = np.einsum("lbdn,lbn->lbd", gh, B_l[t0:t1])  # d/d(delta*u)
            np.einsum("lbdn,dn->lbd", g_exp, A_d, out=gdt_l[t0:t1])
            gdt_l[t0:t1] += gdu * u_l[t0:t1]
            np.multiply(gdu, dt_l[t0:t1], out=gu_l[t0:t1])
            np.matmul(du_l[t0:t1, :, None, :], gh, out=gB_l[t0:t1, :, None, :])
        gu = gu_l.transpose(1, 0, 2)
        grads = [gu, gdt_l.transpose(1, 0, 2), gA, gB_l.transpose(1, 0, 2), gC_l.transpose(1, 0, 2)]
        grads = [np.ascontiguousarray(g) for g in grads]
        if D is not None:
            grads[0] = grads[0] + gy * D.data
            grads.append((gy * u.data).sum(axis=(0, 1)))
        return tuple(grads)

    return Tensor._make(np.ascontiguousarray(y, dtype=u.dtype), parents, backward, "selective_scan")


def _inverse_softplus(y: np.ndarray) -> np.ndarray:
    return y + np.log(-np.expm1(-y))


class MambaCore(Module):
    """Mamba block: in_proj → causal conv → SiLU → selective scan, gated by SiLU(z), out_proj."""

    def __init__(
        self,
        d_model: int,
        d_state: int = 16,
        expand: int = 2,
        d_conv: int = 4,
        dt_rank: int | None = None,
        dt_min: float = 1e-3,
        dt_max: float = 0.1,
        rng: np.random.Generator | None = None,
    ):
        super().__init__()
        rng = rng or np.random.default_rng()
        self.d_model, self.d_state = d_model, d_state
        self.d_inner = expand * d_model
        self.dt_rank = dt_rank or math.ceil(d_model / 16)
        di, R = self.d_inner, self.dt_rank
        self.in_proj = Linear(d_model, 2 * di, bias=False, rng=rng)
        bound = 1.0 / math.sqrt(d_conv)
        self.conv_weight = Parameter(rng.uniform(-bound, bound, (di, d_conv)))
        self.conv_bias = Parameter(rng.uniform(-bound, bound, di))
        self.x_proj = Linear(di, R + 2 * d_state, bias=False, rng=rng)
        self.dt_proj = Linear(R, di, bias=True, rng=rng)
        self.dt_proj.weight.data[:] = rng.uniform(-(R**-0.5), R**-0.5, (di, R))
        dt = np.exp(rng.uniform(math.log(dt_min), math.log(dt_max), di))
        self.dt_proj.bias.data[:] = _inverse_softplus(np.maximum(dt, 1e-4))
        self.A_log = Parameter(np.log(np.tile(np.arange(1, d_state + 1, dtype=np.float64), (di, 1))))
        self.D = Parameter(np.ones(di))
        self.out_proj = Linear(di, d_model, bias=False, rng=rng)

    def state_matrix(self) -> Tensor:
        return F.mul(F.exp(self.A_log), -1.0)

    def forward(self, x: Tensor) -> Tensor:
        if x.ndim != 3 or x.shape[-1] != self.d_model:
            raise DimensionError(f"MambaCore expects B×L×{self.d_model}, got {x.shape}")
        xz = self.in_proj(x)
        xs, z = F.chunk(xz, 2, axis=-1)
        xs = F.silu(F.causal_conv1d(xs, self.conv_weight, self.conv_bias))
        dt, Bs, Cs = F.split(self.x_proj(xs), [self.dt_rank, self.d_state, self.d_state], axis=-1)
        delta = F.softplus(self.dt_proj(dt))
        y = selective_scan(xs, delta, self.state_matrix(), Bs, Cs, self.D)
        return self.out_proj(F.mul(y, F.silu(z)))


def mamba_block(x: Tensor, core: MambaCore) -> Tensor:
    return core(x)


class AtrousMamba(Module):
    """Scan-plan wrapper around one shared :class:`MambaCore`.

    Each scanned sequence (direction × sub-image) gets its own square input
    projection; all sequences then share the core.  Directional outputs are
    merged by summation after returning to the grid.
    """

    def __init__(self, d_model: int, scan: ScanSpec | None = None, rng: np.random.Generator | None = None, **core_kwargs):
        super().__init__()
        rng = rng or np.random.default_rng()
        self.scan = scan or ScanSpec()
        self.d_model = d_model
        n = self.scan.n_sequences
        bound = 1.0 / math.sqrt(d_model)
        self.proj_weight = Parameter(rng.uniform(-bound, bound, (n, d_model, d_model)))
        self.proj_bias = Parameter(rng.uniform(-bound, bound, (n, d_model)))
        self.core = MambaCore(d_model, rng=rng, **core_kwargs)

    def projection_parameter_count(self) -> int:
        return self.proj_weight.size + self.proj_bias.size

    def forward(self, x: Tensor, hw: tuple[int, int] | None = None, stack: str = "batch") -> Tensor:
        """x: B×C×H×W, or B×L×C with ``hw`` giving the grid (square grid assumed otherwise)."""
        image = x.ndim == 4
        if image:
            B, C, H, W = x.shape
        else:
            B, L, C = x.shape
            if hw is None:
                side = math.isqrt(L)
                if side * side != L:
                    raise DimensionError(f"sequence length {L} is not a square grid; pass hw")
                hw = (side, side)
            H, W = hw
            if H * W != L:
                raise DimensionError(f"grid {hw} does not match sequence length {L}")
        if C != self.d_model:
            raise DimensionError(f"AtrousMamba expects {self.d_model} channels, got {C}")

        plans = self.scan.plans(H, W)
        seqs, offset = [], 0
        for plan in plans:
            s = apply_plan(x, plan)  # (B*n, Ls, C), batch-major
            n = plan.n_seq
            s = F.reshape(s, (B, n, plan.seq_len, C))
            w = F.transpose(self.proj_weight[offset : offset + n], (0, 2, 1))
            s = F.matmul(s, w) + F.reshape(self.proj_bias[offset : offset + n], (n, 1, C))
            seqs.append(s)
            offset += n
        # all directions share one seq_len (same sampling step), so stack them for one core call
        allseq = F.concat(seqs, axis=1) if len(seqs) > 1 else seqs[0]
        total, Ls = allseq.shape[1], allseq.shape[2]
        if stack == "sequence":
            flat = F.reshape(F.transpose(allseq, (1, 0, 2, 3)), (total * B, Ls, C))
        else:
            flat = F.reshape(allseq, (B * total, Ls, C))
        out = self.core(flat)
        if stack == "sequence":
            out = F.transpose(F.reshape(out, (total, B, Ls, C)), (1, 0, 2, 3))
        else:
            out = F.reshape(out, (B, total, Ls, C))

        merged, offset = None, 0
        layout = "image" if image else "sequence"
        for plan in plans:
            n = plan.n_seq
            part = F.reshape(out[:, offset : offset + n], (B * n, Ls, C))
            grid = invert_plan(part, plan, layout=layout)
            merged = grid if merged is None else merged + grid
            offset += n
        return merged


def across_mamba(x: Tensor, block: AtrousMamba, hw: tuple[int, int] | None = None) -> Tensor:
    """Four-direction scan with sum merge; ``block.scan`` must list the across directions."""
    if len(block.scan.directions) != 4:
        raise ValueError("across_mamba needs a four-direction ScanSpec")
    return block(x, hw)


def count_core_parameters(d_model: int, d_state: int = 16, expand: int = 2, d_conv: int = 4) -> int:
    """Closed-form parameter count of :class:`MambaCore` (used by the accounting report)."""
    di = expand * d_model
    R = math.ceil(d_model / 16)
    return (
        d_model * 2 * di  # in_proj
        + di * d_conv + di  # conv
        + di * (R + 2 * d_state)  # x_proj
        + R * di + di  # dt_proj
        + di * d_state  # A_log
        + di  # D
        + di * d_model  # out_proj
    )

