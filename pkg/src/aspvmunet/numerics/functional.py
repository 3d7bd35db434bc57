"""Differentiable primitives over :class:`Tensor`.

Every function takes and returns Tensors in the canonical row-major layout
(B×C×H×W for images, B×L×C for sequences).  Backward rules are written by
hand and checked against central differences in the test suite.
"""

from __future__ import annotations

import builtins
from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy import special

from .tensor import DimensionError, SliceGrad, Tensor, as_tensor

# python floats, not numpy scalars: a float64 scalar would upcast float32 arrays
_INV_SQRT_2 = float(1.0 / np.sqrt(2.0))
_INV_SQRT_2PI = float(1.0 / np.sqrt(2.0 * np.pi))


def _pair(a, b) -> tuple[Tensor, Tensor]:
    if not isinstance(a, Tensor):
        a = Tensor(np.asarray(a, dtype=b.dtype))
    if not isinstance(b, Tensor):
        b = Tensor(np.asarray(b, dtype=a.dtype))
    return a, b


def sum_over(axes, *arrays: np.ndarray) -> np.ndarray:
    """Sum of the elementwise product of same-shaped ``arrays`` over ``axes``.

    einsum skips the product temporary and, for the leading-axis reductions
    that parameter gradients need, runs several times faster than ``ndarray.sum``.
    """
    letters = "abcdefghijklmnop"[: arrays[0].ndim]
    kept = "".join(c for i, c in enumerate(letters) if i not in set(axes))
    return np.einsum(",".join([letters] * len(arrays)) + "->" + kept, *arrays)


def unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (reverse of numpy broadcasting)."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    axes = list(range(extra)) + [extra + i for i, n in enumerate(shape) if n == 1 and g.shape[extra + i] != 1]
    return sum_over(axes, g).reshape(shape)


# -- elementwise arithmetic -----------------------------------------------------


def add(a, b) -> Tensor:
    a, b = _pair(a, b)
    return Tensor._make(
        a.data + b.data,
        (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(g, b.shape)),
        "add",
    )


def sub(a, b) -> Tensor:
    a, b = _pair(a, b)
    return Tensor._make(
        a.data - b.data,
        (a, b),
        lambda g: (unbroadcast(g, a.shape), unbroadcast(-g, b.shape)),
        "sub",
    )


def mul(a, b) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        ga = unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._make(a.data * b.data, (a, b), backward, "mul")


def div(a, b) -> Tensor:
    a, b = _pair(a, b)

    def backward(g):
        ga = unbroadcast(g / b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(-g * a.data / (b.data * b.data), b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._make(a.data / b.data, (a, b), backward, "div")


def power(x: Tensor, p: float) -> Tensor:
    x = as_tensor(x)
    return Tensor._make(x.data**p, (x,), lambda g: (g * p * x.data ** (p - 1),), "power")


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return Tensor._make(out, (x,), lambda g: (g * out,), "exp")


def log(x: Tensor) -> Tensor:
    return Tensor._make(np.log(x.data), (x,), lambda g: (g / x.data,), "log")


def clip(x: Tensor, lo: float, hi: float) -> Tensor:
    inside = (x.data >= lo) & (x.data <= hi)
    return Tensor._make(np.clip(x.data, lo, hi), (x,), lambda g: (g * inside,), "clip")


# -- activations ----------------------------------------------------------------


def _sigmoid(a: np.ndarray) -> np.ndarray:
    # plain numpy beats scipy's expit several-fold; exp overflow just yields 0
    with np.errstate(over="ignore"):
        e = np.exp(-a)
    e += 1.0
    return np.reciprocal(e, out=e)


def sigmoid(x: Tensor) -> Tensor:
    out = _sigmoid(x.data)
    return Tensor._make(out, (x,), lambda g: (g * out * (1.0 - out),), "sigmoid")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._make(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def silu(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return Tensor._make(x.data * s, (x,), lambda g: (g * (s * (1.0 + x.data * (1.0 - s))),), "silu")


def gelu(x: Tensor) -> Tensor:
    """Exact (erf-based) GELU."""
    a = x.data
    cdf = special.erf(a * _INV_SQRT_2)
    cdf += 1.0
    cdf *= 0.5

    def backward(g):
        pdf = np.exp(-0.5 * a * a)
        pdf *= a
        pdf *= _INV_SQRT_2PI
        pdf += cdf
        return (g * pdf,)

    return Tensor._make(a * cdf, (x,), backward, "gelu")


def softplus(x: Tensor) -> Tensor:
    out = np.log1p(np.exp(-np.abs(x.data)))
    out += np.maximum(x.data, 0)
    return Tensor._make(out, (x,), lambda g: (g * _sigmoid(x.data),), "softplus")


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True)

    def backward(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)

    return Tensor._make(out, (x,), backward, "softmax")


# -- reductions -----------------------------------------------------------------


def _norm_axes(axis, ndim) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(a % ndim for a in axis)


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    axes = _norm_axes(axis, x.ndim)
    out = x.data.sum(axis=axes, keepdims=keepdims)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._make(np.asarray(out), (x,), backward, "sum")


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, x.ndim)
    n = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum(x, axis=axes, keepdims=keepdims), 1.0 / n)


def max(x: Tensor, axis: int, keepdims: bool = False) -> Tensor:  # noqa: A001
    """Maximum along one axis; the gradient goes to the first arg-max."""
    axis = axis % x.ndim
    idx = np.expand_dims(x.data.argmax(axis=axis), axis)
    out = np.take_along_axis(x.data, idx, axis=axis)

    def backward(g):
        gx = np.zeros_like(x.data)
        gk = g if keepdims else np.expand_dims(g, axis)
        np.put_along_axis(gx, idx, gk, axis=axis)
        return (gx,)

    return Tensor._make(out if keepdims else np.squeeze(out, axis), (x,), backward, "max")


# -- shape manipulation ---------------------------------------------------------


def reshape(x: Tensor, shape) -> Tensor:
    return Tensor._make(x.data.reshape(shape), (x,), lambda g: (g.reshape(x.shape),), "reshape")


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes) if axes else tuple(reversed(range(x.ndim)))
    inv = np.argsort(axes)
    return Tensor._make(
        np.ascontiguousarray(x.data.transpose(axes)),
        (x,),
        lambda g: (np.ascontiguousarray(g.transpose(inv)),),
        "transpose",
    )


def getitem(x: Tensor, idx) -> Tensor:
    def backward(g):
        gx = np.zeros_like(x.data)
        np.add.at(gx, idx, g)
        return (gx,)

    def backward_basic(g):
        return (SliceGrad(idx, g),)

    basic = all(isinstance(i, (slice, int, type(Ellipsis), type(None))) for i in (idx if isinstance(idx, tuple) else (idx,)))
    return Tensor._make(np.array(x.data[idx], order="C"), (x,), backward_basic if basic else backward, "getitem")


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    axis = axis % tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
            t.shape[i] != tensors[0].shape[i] for i in range(t.ndim) if i != axis
        ):
            raise DimensionError(f"concat along axis {axis}: shapes {tensors[0].shape} and {t.shape}")
    bounds = np.cumsum([0] + [t.shape[axis] for t in tensors])

    def backward(g):
        sl = [slice(None)] * g.ndim
        out = []
        for i in range(len(tensors)):
            sl[axis] = slice(bounds[i], bounds[i + 1])
            out.append(np.ascontiguousarray(g[tuple(sl)]))
        return out

    return Tensor._make(np.concatenate([t.data for t in tensors], axis=axis), tensors, backward, "concat")


def stack(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = list(tensors)
    expanded = [reshape(t, t.shape[:axis % (t.ndim + 1)] + (1,) + t.shape[axis % (t.ndim + 1):]) for t in tensors]
    return concat(expanded, axis=axis)


def chunk(x: Tensor, n: int, axis: int = -1) -> list[Tensor]:
    axis = axis % x.ndim
    if x.shape[axis] % n:
        raise DimensionError(f"cannot chunk axis of size {x.shape[axis]} into {n} equal parts")
    step = x.shape[axis] // n
    out = []
    for i in range(n):
        sl = [slice(None)] * x.ndim
        sl[axis] = slice(i * step, (i + 1) * step)
        out.append(getitem(x, tuple(sl)))
    return out


def split(x: Tensor, sizes: Sequence[int], axis: int = -1) -> list[Tensor]:
    axis = axis % x.ndim
    if int(np.sum(sizes)) != x.shape[axis]:
        raise DimensionError(f"split sizes {list(sizes)} do not sum to {x.shape[axis]}")
    out, start = [], 0
    for s in sizes:
        sl = [slice(None)] * x.ndim
        sl[axis] = slice(start, start + s)
        out.append(getitem(x, tuple(sl)))
        start += s
    return out


def roll(x: Tensor, shift: int, axis: int) -> Tensor:
    return Tensor._make(np.roll(x.data, shift, axis=axis), (x,), lambda g: (np.roll(g, -shift, axis=axis),), "roll")


def take_rows(x: Tensor, index: np.ndarray, *, injective: bool = True) -> Tensor:
    """Gather ``x[:, index]`` along axis 1; entries equal to -1 yield zeros.

    ``injective`` promises that the non-negative entries of ``index`` are
    distinct, which allows a plain scatter in the backward pass.
    """
    index = np.asarray(index, dtype=np.intp)
    valid = index >= 0
    src = index[valid]
    out = np.zeros((x.shape[0], index.size) + x.shape[2:], dtype=x.dtype)
    out[:, valid] = x.data[:, src]

    def backward(g):
        gx = np.zeros_like(x.data)
        if injective:
            gx[:, src] = g[:, valid]
        else:
            np.add.at(gx, (slice(None), src), g[:, valid])
        return (gx,)

    return Tensor._make(out, (x,), backward, "take_rows")


# -- linear algebra -------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    a, b = _pair(a, b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul shapes {a.shape} and {b.shape} are incompatible")

    def backward(g):
        ga = unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._make(a.data @ b.data, (a, b), backward, "matmul")


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight.T + bias`` over the last axis; weight is (out, in)."""
    if x.shape[-1] != weight.shape[1]:
        raise DimensionError(f"linear: input features {x.shape} vs weight {weight.shape}")
    lead = x.shape[:-1]
    x2 = x.data.reshape(-1, x.shape[-1])
    out = x2 @ weight.data.T
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        g2 = g.reshape(-1, g.shape[-1])
        gx = (g2 @ weight.data).reshape(x.shape) if x.requires_grad else None
        gw = g2.T @ x2 if weight.requires_grad else None
        if bias is None:
            return gx, gw
        return gx, gw, sum_over((0,), g2)

    return Tensor._make(out.reshape(lead + (weight.shape[0],)), parents, backward, "linear")


# -- convolutions ---------------------------------------------------------------


def conv_output_size(n: int, k: int, stride: int, padding: int, dilation: int) -> int:
    return (n + 2 * padding - dilation * (k - 1) - 1) // stride + 1


def conv2d(
    x: Tensor,
    weight: Tensor,
    bias: Tensor | None = None,
    stride: int = 1,
    padding: int = 0,
    dilation: int = 1,
    groups: int = 1,
) -> Tensor:
    """2D cross-correlation, computed tap by tap (no im2col buffer)."""
    if x.ndim != 4 or weight.ndim != 4:
        raise DimensionError(f"conv2d expects 4D input and weight, got {x.shape} and {weight.shape}")
    B, C, H, W = x.shape
    O, Cg, kh, kw = weight.shape
    if dilation < 1 or stride < 1:
        raise ValueError("stride and dilation must be >= 1")
    if C % groups or O % groups or C // groups != Cg:
        raise DimensionError(f"conv2d: input {x.shape} incompatible with weight {weight.shape} at groups={groups}")
    G, Og = groups, O // groups
    Ho = conv_output_size(H, kh, stride, padding, dilation)
    Wo = conv_output_size(W, kw, stride, padding, dilation)
    if Ho < 1 or Wo < 1:
        raise DimensionError(f"conv2d: input {x.shape} too small for weight {weight.shape}")

    xp = np.pad(x.data, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x.data
    depthwise = Cg == 1 and Og == 1
    wd = weight.data

    def tap(i, j):
        return (
            slice(None),
            slice(None),
            slice(i * dilation, i * dilation + stride * (Ho - 1) + 1, stride),
            slice(j * dilation, j * dilation + stride * (Wo - 1) + 1, stride),
        )

    # one GEMM over a strided window view beats the tap loop unless the output is a single map
    gemm = G == 1 and O > 1

    def columns():
        span_h, span_w = dilation * (kh - 1) + 1, dilation * (kw - 1) + 1
        win = sliding_window_view(xp, (span_h, span_w), axis=(2, 3))
        return win[:, :, ::stride, ::stride, ::dilation, ::dilation]  # B, C, Ho, Wo, kh, kw

    if kh == kw == 1 and stride == 1 and padding == 0 and G == 1:
        out = np.einsum("oc,bchw->bohw", wd[:, :, 0, 0], x.data, optimize=True)
    elif gemm:
        out = np.ascontiguousarray(np.tensordot(wd, columns(), axes=([1, 2, 3], [1, 4, 5])).transpose(1, 0, 2, 3))
    elif depthwise:
        out = np.zeros((B, C, Ho, Wo), dtype=x.dtype)
        for i in range(kh):
            for j in range(kw):
                out += xp[tap(i, j)] * wd[:, 0, i, j][None, :, None, None]
    else:
        out = np.zeros((B, G, Og, Ho * Wo), dtype=x.dtype)
        wg = wd.reshape(G, Og, Cg, kh, kw)
        for i in range(kh):
            for j in range(kw):
                xs = xp[tap(i, j)].reshape(B, G, Cg, Ho * Wo)
                out += wg[:, :, :, i, j] @ xs
        out = out.reshape(B, O, Ho, Wo)
    if bias is not None:
        out = out + bias.data[None, :, None, None]

    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gxp = np.zeros_like(xp) if x.requires_grad else None
        gw = np.zeros_like(wd) if weight.requires_grad else None
        if kh == kw == 1 and stride == 1 and padding == 0 and G == 1:
            if gxp is not None:
                gxp = np.einsum("oc,bohw->bchw", wd[:, :, 0, 0], g, optimize=True)
            if gw is not None:
                gw[:, :, 0, 0] = np.einsum("bohw,bchw->oc", g, x.data, optimize=True)
        elif gemm:
            if gw is not None:
                gw[...] = np.tensordot(g, columns(), axes=([0, 2, 3], [0, 2, 3]))
            if gxp is not None:
                gcols = np.tensordot(wd, g, axes=([0], [1]))  # C, kh, kw, B, Ho, Wo
                for i in range(kh):
                    for j in range(kw):
                        gxp[tap(i, j)] += gcols[:, i, j].transpose(1, 0, 2, 3)
        elif depthwise:
            for i in range(kh):
                for j in range(kw):
                    sl = tap(i, j)
                    if gw is not None:
                        gw[:, 0, i, j] = sum_over((0, 2, 3), g, xp[sl])
                    if gxp is not None:
                        gxp[sl] += g * wd[:, 0, i, j][None, :, None, None]
        else:
            wg = wd.reshape(G, Og, Cg, kh, kw)
            gg = g.reshape(B, G, Og, Ho * Wo)
            gwg = gw.reshape(G, Og, Cg, kh, kw) if gw is not None else None
            for i in range(kh):
                for j in range(kw):
                    sl = tap(i, j)
                    if gwg is not None:
                        xs = xp[sl].reshape(B, G, Cg, Ho * Wo)
                        gwg[:, :, :, i, j] = (gg @ np.swapaxes(xs, -1, -2)).sum(axis=0)
                    if gxp is not None:
                        gxp[sl] += (np.swapaxes(wg[:, :, :, i, j], -1, -2) @ gg).reshape(B, C, Ho, Wo)
        gx = None
        if gxp is not None:
            gx = gxp[:, :, padding : padding + H, padding : padding + W] if padding else gxp
            gx = np.ascontiguousarray(gx)
        if bias is None:
            return gx, gw
        return gx, gw, sum_over((0, 2, 3), g)

    return Tensor._make(out, parents, backward, "conv2d")


def causal_conv1d(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Depthwise causal convolution over a B×L×D sequence; weight is (D, K).

    ``y[t] = sum_k weight[:, k] * x[t - K + 1 + k] + bias`` with zeros before t=0.
    """
    B, L, D = x.shape
    if weight.shape[0] != D:
        raise DimensionError(f"causal_conv1d: channels {D} vs weight {weight.shape}")
    K = weight.shape[1]
    xp = np.concatenate([np.zeros((B, K - 1, D), dtype=x.dtype), x.data], axis=1)
    out = np.zeros_like(x.data)
    for k in range(K):
        out += xp[:, k : k + L] * weight.data[:, k]
    if bias is not None:
        out = out + bias.data
    parents = (x, weight) if bias is None else (x, weight, bias)

    def backward(g):
        gxp = np.zeros_like(xp)
        gw = np.zeros_like(weight.data)
        for k in range(K):
            gxp[:, k : k + L] += g * weight.data[:, k]
            gw[:, k] = sum_over((0, 1), g, xp[:, k : k + L])
        gx = np.ascontiguousarray(gxp[:, K - 1 :])
        if bias is None:
            return gx, gw
        return gx, gw, sum_over((0, 1), g)

    return Tensor._make(out, parents, backward, "causal_conv1d")


# -- normalization --------------------------------------------------------------


def layer_norm(x: Tensor, gamma: Tensor | None, beta: Tensor | None, eps: float = 1e-5, axis: int = -1) -> Tensor:
    """Normalize along ``axis`` (default: last); gamma/beta have that axis' length."""
    axis = axis % x.ndim
    C = x.shape[axis]
    if C == 0:
        raise DimensionError("layer_norm over an empty axis")
    bshape = [1] * x.ndim
    bshape[axis] = C
    if axis == x.ndim - 1:
        # a short last axis reduces far faster as a matrix-vector product than through ufunc.reduce
        avg = np.full((C, 1), 1.0 / C, dtype=x.dtype)

        def mean(a):
            return (a.reshape(-1, C) @ avg).reshape(a.shape[:-1] + (1,))
    else:

        def mean(a):
            return a.mean(axis=axis, keepdims=True)

    mu = mean(x.data)
    xc = x.data - mu
    var = mean(xc * xc)
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    gam = gamma.data.reshape(bshape) if gamma is not None else None
    out = xhat * gam if gam is not None else xhat
    if beta is not None:
        out = out + beta.data.reshape(bshape)
    red = tuple(i for i in range(x.ndim) if i != axis)
    parents = tuple(t for t in (x, gamma, beta) if t is not None)

    def backward(g):
        gh = g * gam if gam is not None else g
        gx = rstd * (gh - mean(gh) - xhat * mean(gh * xhat))
        grads = [gx]
        if gamma is not None:
            grads.append(sum_over(red, g, xhat))
        if beta is not None:
            grads.append(sum_over(red, g))
        return grads

    return Tensor._make(out.astype(x.dtype, copy=False), parents, backward, "layer_norm")


def batch_norm(
    x: Tensor,
    gamma: Tensor,
    beta: Tensor,
    running_mean: np.ndarray,
    running_var: np.ndarray,
    training: bool,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Batch normalization over axis 1 of B×C×H×W.

    In training mode the running statistics are updated in place (unbiased
    variance), matching the usual framework convention.
    """
    axes = (0, 2, 3)
    shp = (1, -1, 1, 1)
    if training:
        mu = x.data.mean(axis=axes, keepdims=True)
        xc = x.data - mu
        var = (xc * xc).mean(axis=axes, keepdims=True)
        n = x.size // x.shape[1]
        running_mean *= 1.0 - momentum
        running_mean += momentum * mu.reshape(-1)
        running_var *= 1.0 - momentum
        running_var += momentum * var.reshape(-1) * (n / builtins.max(n - 1, 1))
    else:
        mu = running_mean.reshape(shp)
        var = running_var.reshape(shp)
        xc = x.data - mu
    rstd = 1.0 / np.sqrt(var + eps)
    xhat = xc * rstd
    out = (xhat * gamma.data.reshape(shp) + beta.data.reshape(shp)).astype(x.dtype, copy=False)

    def backward(g):
        gh = g * gamma.data.reshape(shp)
        if training:
            gx = rstd * (gh - gh.mean(axis=axes, keepdims=True) - xhat * (gh * xhat).mean(axis=axes, keepdims=True))
        else:
            gx = gh * rstd
        return gx, sum_over(axes, g, xhat), sum_over(axes, g)

    return Tensor._make(out, (x, gamma, beta), backward, "batch_norm")


# -- pooling and resampling -----------------------------------------------------


def max_pool2d(x: Tensor) -> Tensor:
    """2×2 max pool with stride 2; H and W must be even."""
    B, C, H, W = x.shape
    if H % 2 or W % 2:
        raise DimensionError(f"max_pool2d needs even spatial extents, got {x.shape}")
    win = x.data.reshape(B, C, H // 2, 2, W // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H // 2, W // 2, 4)
    idx = win.argmax(axis=-1)[..., None]
    out = np.take_along_axis(win, idx, axis=-1)[..., 0]

    def backward(g):
        gw = np.zeros_like(win)
        np.put_along_axis(gw, idx, g[..., None], axis=-1)
        gx = gw.reshape(B, C, H // 2, W // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(B, C, H, W)
        return (gx,)

    return Tensor._make(out, (x,), backward, "max_pool2d")


def avg_pool2d(x: Tensor, k: int = 2) -> Tensor:
    B, C, H, W = x.shape
    if H % k or W % k:
        raise DimensionError(f"avg_pool2d({k}) needs divisible extents, got {x.shape}")
    out = x.data.reshape(B, C, H // k, k, W // k, k).mean(axis=(3, 5))

    def backward(g):
        return (np.repeat(np.repeat(g, k, axis=2), k, axis=3) / (k * k),)

    return Tensor._make(out, (x,), backward, "avg_pool2d")


def global_avg_pool(x: Tensor) -> Tensor:
    """B×C×H×W -> B×C."""
    return mean(x, axis=(2, 3))


def _bilinear_matrix(n: int, scale: int, dtype) -> np.ndarray:
    # half-pixel centres, edge-clamped (align_corners=False)
    m = np.zeros((n * scale, n), dtype=dtype)
    for o in range(n * scale):
        src = builtins.max((o + 0.5) / scale - 0.5, 0.0)
        i0 = min(int(np.floor(src)), n - 1)
        i1 = min(i0 + 1, n - 1)
        lam = src - i0
        m[o, i0] += 1.0 - lam
        m[o, i1] += lam
    return m


def upsample_bilinear2x(x: Tensor) -> Tensor:
    B, C, H, W = x.shape
    mh = _bilinear_matrix(H, 2, x.dtype)
    mw = _bilinear_matrix(W, 2, x.dtype)
    out = np.einsum("ih,bchw,jw->bcij", mh, x.data, mw, optimize=True)

    def backward(g):
        return (np.einsum("ih,bcij,jw->bchw", mh, g, mw, optimize=True),)

    return Tensor._make(out, (x,), backward, "upsample_bilinear2x")
