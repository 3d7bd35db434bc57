"""Self-checks behind ``aspvmunet verify``: each suite returns named pass/fail checks."""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .attention import ChannelAttention, SpatialAttention
from .blocks import APVM, ASPVM, ASPBlock, BlockConfig, CNNBranch, SEBlock, SKBlock, shift_round, shift_round_back
from .network import REFERENCE_PARAMS, NetworkConfig, build, count_flops, parameter_breakdown
from .numerics import Tensor, default_dtype, gradcheck
from .pipeline import Metrics, compute_metrics
from .scan import SCAN_METHODS, ScanSpec, apply_plan, build_atrous_plan, compute_padding, invert_plan
from .ssm import count_core_parameters, selective_scan

GRAD_TOL = 1e-4
STEPS = (1, 2, 3, 4, 8)
PVM_CLAIM = 74.8


@dataclass
class Check:
    suite: str
    name: str
    passed: bool
    detail: str = ""
    seconds: float = 0.0


def _timed(suite: str, name: str, fn: Callable[[], tuple[bool, str]]) -> Check:
    t0 = time.perf_counter()
    ok, detail = fn()
    return Check(suite, name, bool(ok), detail, time.perf_counter() - t0)


# -- scan -------------------------------------------------------------------------


def atrous_sweep(max_side: int = 17, max_step: int = 8) -> dict[str, int]:
    """Failure counts for partition, sequence length and round trip over the grid sweep."""
    rng = np.random.default_rng(0)
    fails = {"partition": 0, "length": 0, "round_trip": 0, "cases": 0}
    for H in range(1, max_side + 1):
        for W in range(1, max_side + 1):
            x = Tensor(rng.standard_normal((1, 2, H, W)))
            for S in range(1, max_step + 1):
                fails["cases"] += 1
                plan = build_atrous_plan(H, W, S)
                P_H, P_W = compute_padding(H, W, S)
                if not np.array_equal(np.sort(plan.forward.ravel()), np.arange((H + P_H) * (W + P_W))):
                    fails["partition"] += 1
                if plan.n_seq != S * S or plan.seq_len * S * S != (H + P_H) * (W + P_W):
                    fails["length"] += 1
                if not np.array_equal(invert_plan(apply_plan(x, plan), plan).data, x.data):
                    fails["round_trip"] += 1
    return fails


def verify_scan() -> list[Check]:
    t0 = time.perf_counter()
    fails = atrous_sweep()
    dt = time.perf_counter() - t0
    n = fails["cases"]
    checks = [Check("scan", f"atrous {key} (H,W<=17, S<=8)", fails[key] == 0, f"{n - fails[key]}/{n} ok", dt / 3) for key in ("partition", "length", "round_trip")]

    def methods():
        x = Tensor(np.random.default_rng(1).standard_normal((1, 2, 7, 9)))
        bad = []
        for m in SCAN_METHODS:
            spec = ScanSpec.from_method(m, 2)
            for plan in spec.plans(7, 9):
                if not np.array_equal(invert_plan(apply_plan(x, plan), plan).data, x.data):
                    bad.append(m)
        return not bad, "all methods invert" if not bad else f"failed: {bad}"

    checks.append(_timed("scan", "round trip for every scan method", methods))
    return checks


# -- parameters -------------------------------------------------------------------


def pvm_reduction(channels: int = 384) -> float:
    """Percent fewer parameters in a 4-segment PVM than in a full-width Mamba."""
    pvm = APVM(channels, ScanSpec(step=1), rng=np.random.default_rng(0)).num_parameters()
    return 100 * (1 - pvm / count_core_parameters(channels))


def step_counts(base: NetworkConfig | None = None) -> dict[int, tuple[int, int, dict[str, int]]]:
    """Per atrous step: (parameters, MACs, parameter breakdown)."""
    base = base or NetworkConfig.base()
    out = {}
    for s in STEPS:
        net = build(NetworkConfig.base(**{**base.as_dict(), "atrous_step": s}))
        out[s] = (net.num_parameters(), count_flops(net), parameter_breakdown(net))
    return out


def verify_params() -> list[Check]:
    checks = []
    red = pvm_reduction()
    checks.append(Check("params", "PVM reduction at C=384", abs(red - PVM_CLAIM) <= 3, f"{red:.2f}% (claim {PVM_CLAIM} +/- 3)"))
    t0 = time.perf_counter()
    counts = step_counts()
    dt = time.perf_counter() - t0
    n = [counts[s][0] for s in STEPS]
    checks.append(Check("params", "count increases with step", all(a < b for a, b in zip(n, n[1:])), " < ".join(f"{v / 1e6:.2f}M" for v in n), dt))
    ratio = n[-1] / n[0]
    checks.append(Check("params", "S=8 / S=1 ratio in [2.2, 3.1]", 2.2 <= ratio <= 3.1, f"{ratio:.3f}"))
    only_proj = all({k for k in counts[s][2] if counts[s][2][k] != counts[1][2][k]} <= {"scan_projection"} for s in STEPS)
    checks.append(Check("params", "step increment is scan projections only", only_proj, ""))
    flops = [counts[s][1] for s in STEPS]
    spread = max(flops) / min(flops) - 1
    checks.append(Check("params", "MACs constant across steps (<1%)", spread < 0.01, f"{min(flops) / 1e9:.3f}-{max(flops) / 1e9:.3f} GMAC"))
    base_dev = counts[2][0] / REFERENCE_PARAMS["base"] - 1
    checks.append(Check("params", "base within 25% of 4.69M", abs(base_dev) < 0.25, f"{counts[2][0]:,} ({100 * base_dev:+.1f}%)"))
    tiny = build(NetworkConfig.tiny()).num_parameters()
    tiny_dev = tiny / REFERENCE_PARAMS["tiny"] - 1
    checks.append(Check("params", "tiny within 50% of 0.29M", abs(tiny_dev) < 0.5, f"{tiny:,} ({100 * tiny_dev:+.1f}%)"))
    return checks


# -- selective scan oracle ---------------------------------------------------------


def naive_selective_scan(u, delta, A, B, C, D):
    """Literal per-element timestep loop."""
    Bt, L, Di = u.shape
    N = A.shape[1]
    y = np.zeros_like(u)
    for b in range(Bt):
        for d in range(Di):
            h = np.zeros(N)
            for t in range(L):
                for n in range(N):
                    h[n] = np.exp(delta[b, t, d] * A[d, n]) * h[n] + delta[b, t, d] * B[b, t, n] * u[b, t, d]
                y[b, t, d] = sum(C[b, t, n] * h[n] for n in range(N)) + D[d] * u[b, t, d]
    return y


def random_scan_instance(rng: np.random.Generator):
    Bt, L, Di, N = (int(v) for v in rng.integers(1, [3, 9, 4, 5], endpoint=True))
    u = rng.standard_normal((Bt, L, Di))
    delta = np.log1p(np.exp(rng.standard_normal((Bt, L, Di))))
    A = -np.exp(rng.standard_normal((Di, N)))
    B = rng.standard_normal((Bt, L, N))
    C = rng.standard_normal((Bt, L, N))
    D = rng.standard_normal(Di)
    return u, delta, A, B, C, D


def scan_oracle_error(n: int = 100, seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        args = random_scan_instance(rng)
        y = selective_scan(*(Tensor(a) for a in args)).data
        worst = max(worst, float(np.abs(y - naive_selective_scan(*args)).max()))
    return worst


def verify_ssm_oracle() -> list[Check]:
    def run():
        err = scan_oracle_error()
        return err < 1e-6, f"max abs diff {err:.2e} over 100 instances"

    return [_timed("ssm-oracle", "selective scan vs timestep loop", run)]


# -- metrics ----------------------------------------------------------------------


def naive_confusion(pred: np.ndarray, target: np.ndarray) -> tuple[int, int, int, int]:
    tp = fp = tn = fn = 0
    for p, t in zip(pred.ravel().tolist(), target.ravel().tolist()):
        if p >= 0.5:
            tp, fp = (tp + 1, fp) if t else (tp, fp + 1)
        else:
            fn, tn = (fn + 1, tn) if t else (fn, tn + 1)
    return tp, fp, tn, fn


def naive_scores(tp: int, fp: int, tn: int, fn: int) -> dict[str, float]:
    def div(a, b, empty):
        return a / b if b else empty

    return {
        "miou": div(tp, tp + fp + fn, 1.0),
        "dsc": div(2 * tp, 2 * tp + fp + fn, 1.0),
        "acc": (tp + tn) / (tp + fp + tn + fn),
        "spe": div(tn, tn + fp, 1.0 if fn == 0 else 0.0),
        "sen": div(tp, tp + fn, 1.0 if fp == 0 else 0.0),
    }


def metrics_oracle_mismatches(n: int = 100, seed: int = 0) -> tuple[int, int]:
    """(pairs whose scores differ from the counting oracle, reports breaking dsc = 2m/(1+m))."""
    rng = np.random.default_rng(seed)
    mismatched = identity = 0
    for _ in range(n):
        shape = tuple(int(v) for v in rng.integers(1, 33, 2))
        pred = rng.random(shape)
        target = (rng.random(shape) < rng.random()).astype(np.uint8)
        m = compute_metrics(pred, target)
        counts = naive_confusion(pred, target)
        if (m.tp, m.fp, m.tn, m.fn) != counts or m.scores() != naive_scores(*counts):
            mismatched += 1
        if not np.isclose(m.dsc, 2 * m.miou / (1 + m.miou), rtol=1e-12, atol=0):
            identity += 1
    return mismatched, identity


def verify_metrics() -> list[Check]:
    t0 = time.perf_counter()
    bad, ident = metrics_oracle_mismatches()
    dt = time.perf_counter() - t0
    return [
        Check("metrics", "five metrics equal counting oracle", bad == 0, f"{100 - bad}/100 pairs exact", dt),
        Check("metrics", "dsc = 2 miou / (1 + miou)", ident == 0, f"{100 - ident}/100 reports", 0.0),
    ]


# -- gradients --------------------------------------------------------------------


def _randn(*shape, seed=0):
    return np.random.default_rng(seed).standard_normal(shape)


def gradient_cases() -> dict[str, Callable[[], tuple[Callable[[], Tensor], list]]]:
    """Name -> factory returning (forward closure, named tensors), built in float64."""

    def module_case(make, x_shape, seed=0, call=None):
        def factory():
            with default_dtype(np.float64):
                mod = make(np.random.default_rng(seed))
            x = Tensor(_randn(*x_shape, seed=seed + 1), requires_grad=True)
            fn = (lambda: call(mod, x)) if call else (lambda: mod(x))
            return fn, [("x", x)] + list(mod.named_parameters())

        return factory

    def sk_case():
        with default_dtype(np.float64):
            sk = SKBlock(16, rng=np.random.default_rng(3))
        g = Tensor(_randn(2, 16, 3, 3, seed=4), requires_grad=True)
        l = Tensor(_randn(2, 16, 3, 3, seed=5), requires_grad=True)
        return (lambda: sk(g, l)), [("g", g), ("l", l)] + list(sk.named_parameters())

    def cab_case():
        ch, sizes = [4, 8, 8, 8, 8], [8, 4, 4, 2, 1]
        with default_dtype(np.float64):
            cab = ChannelAttention(ch, rng=np.random.default_rng(6))
        feats = [Tensor(_randn(1, c, s, s, seed=7 + i), requires_grad=True) for i, (c, s) in enumerate(zip(ch, sizes))]

        def fn():
            out = cab(feats)
            return sum(((o * o).sum() for o in out[1:]), (out[0] * out[0]).sum())

        return fn, [(f"x{i}", f) for i, f in enumerate(feats)] + list(cab.named_parameters())

    def micro_case():
        with default_dtype(np.float64):
            net = build(NetworkConfig(stage_channels=(8,) * 6, input_size=(32, 32), variant="micro"), seed=2)
        net.eval()  # batch statistics over the 1×1 bottleneck are degenerate
        x = Tensor(np.random.default_rng(3).random((1, 3, 32, 32)), requires_grad=True)
        return (lambda: net.logits(x)), [("x", x)] + list(net.named_parameters())

    return {
        "CNN branch": module_case(lambda r: CNNBranch(8, rng=r), (2, 8, 4, 4)),
        "SE": module_case(lambda r: SEBlock(16, rng=r), (2, 16, 3, 3)),
        "SK": sk_case,
        "SAB": module_case(lambda r: SpatialAttention(r), (1, 3, 8, 8)),
        "CAB": cab_case,
        "APVM": module_case(lambda r: APVM(16, ScanSpec(step=2), rng=r), (1, 16, 3, 4)),
        "ASPVM": module_case(lambda r: ASPVM(16, ScanSpec(step=2), rng=r), (1, 16, 3, 4)),
        "ASP block": module_case(lambda r: ASPBlock(BlockConfig(16), rng=r), (1, 16, 6, 6), seed=4),
        "micro network": micro_case,
    }


GRADCHECK_BUDGET = {"ASP block": dict(max_per_tensor=3), "micro network": dict(max_per_tensor=1, max_tensors=40)}


def verify_gradcheck(names: list[str] | None = None) -> list[Check]:
    checks = []
    for name, factory in gradient_cases().items():
        if names and name not in names:
            continue
        t0 = time.perf_counter()
        fn, tensors = factory()
        rep = gradcheck(fn, tensors, **GRADCHECK_BUDGET.get(name, dict(max_per_tensor=8)), name=name)
        detail = f"max rel err {rep.max_rel_error:.1e} over {rep.checked} entries"
        checks.append(Check("gradcheck", name, rep.max_rel_error < GRAD_TOL, detail, time.perf_counter() - t0))
    return checks


def verify_shift_round() -> list[Check]:
    out = []
    for C in (8, 16, 32, 384):
        x = Tensor(_randn(2, 5, C, seed=C))
        shifted = shift_round(x).data
        ok = np.array_equal(shifted, np.roll(x.data, -C // 8, axis=-1)) and np.array_equal(shift_round_back(shift_round(x)).data, x.data)
        out.append(Check("shift", f"rotation and inverse at C={C}", ok))
    return out


SUITES: dict[str, Callable[[], list[Check]]] = {
    "scan": verify_scan,
    "gradcheck": verify_gradcheck,
    "params": verify_params,
    "metrics": verify_metrics,
    "ssm-oracle": verify_ssm_oracle,
}


def run_suites(names: list[str]) -> list[Check]:
    checks = []
    for n in names:
        checks.extend(SUITES[n]())
    return checks


def format_table(checks: list[Check]) -> str:
    rows = [("suite", "check", "result", "detail", "sec")]
    rows += [(c.suite, c.name, "PASS" if c.passed else "FAIL", c.detail, f"{c.seconds:.1f}") for c in checks]
    widths = [max(len(r[i]) for r in rows) for i in range(5)]
    lines = ["  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip() for r in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


__all__ = ["Check", "SUITES", "format_table", "run_suites", "verify_gradcheck", "verify_metrics", "verify_params", "verify_scan", "verify_ssm_oracle"]
