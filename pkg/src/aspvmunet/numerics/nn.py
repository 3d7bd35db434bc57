"""Module containers and the standard layers built on the functional ops."""

from __future__ import annotations

from typing import Iterator

import numpy as np

from . import functional as F
from .tensor import Tensor, get_default_dtype


class Parameter(Tensor):
    __slots__ = ()

    def __init__(self, data, dtype=None):
        super().__init__(np.array(data, dtype=dtype or get_default_dtype()), requires_grad=True)


class Module:
    """Minimal module tree: parameters, buffers and children register by attribute."""

    def __init__(self):
        object.__setattr__(self, "_params", {})
        object.__setattr__(self, "_buffers", {})
        object.__setattr__(self, "_children", {})
        object.__setattr__(self, "training", True)

    def __setattr__(self, name, value):
        if isinstance(value, Parameter):
            self._params[name] = value
        elif isinstance(value, Module):
            self._children[name] = value
        object.__setattr__(self, name, value)

    def register_buffer(self, name: str, value: np.ndarray) -> None:
        self._buffers[name] = name
        object.__setattr__(self, name, value)

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    # -- traversal --------------------------------------------------------------

    def named_modules(self, prefix: str = "", _seen=None) -> Iterator[tuple[str, "Module"]]:
        seen = set() if _seen is None else _seen
        if id(self) in seen:
            return
        seen.add(id(self))
        yield prefix, self
        for name, child in self._children.items():
            yield from child.named_modules(f"{prefix}.{name}" if prefix else name, seen)

    def named_parameters(self) -> Iterator[tuple[str, Parameter]]:
        seen: set[int] = set()
        for mname, mod in self.named_modules():
            for pname, p in mod._params.items():
                if id(p) in seen:
                    continue
                seen.add(id(p))
                yield (f"{mname}.{pname}" if mname else pname), p

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def named_buffers(self) -> Iterator[tuple[str, np.ndarray]]:
        for mname, mod in self.named_modules():
            for bname in mod._buffers:
                yield (f"{mname}.{bname}" if mname else bname), getattr(mod, bname)

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    # -- state ----------------------------------------------------------------

    def train(self, mode: bool = True) -> "Module":
        for _, m in self.named_modules():
            object.__setattr__(m, "training", mode)
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.grad = None

    def to(self, dtype) -> "Module":
        """Cast parameters and buffers in place (e.g. to float64 for gradchecks)."""
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = None
        for _, m in self.named_modules():
            for bname in m._buffers:
                object.__setattr__(m, bname, getattr(m, bname).astype(dtype))
        return self

    def state_dict(self) -> dict[str, np.ndarray]:
        out = {f"param/{n}": p.data for n, p in self.named_parameters()}
        out.update({f"buffer/{n}": b for n, b in self.named_buffers()})
        return out

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        expected = set(self.state_dict())
        missing = expected - set(state)
        unexpected = set(state) - expected
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)[:5]} unexpected={sorted(unexpected)[:5]}")
        params = dict(self.named_parameters())
        for n, p in params.items():
            arr = state[f"param/{n}"]
            if arr.shape != p.shape:
                raise ValueError(f"{n}: stored shape {arr.shape} != {p.shape}")
            p.data = arr.astype(p.dtype)
        for mname, m in self.named_modules():
            for bname in m._buffers:
                key = f"buffer/{mname}.{bname}" if mname else f"buffer/{bname}"
                object.__setattr__(m, bname, state[key].astype(getattr(m, bname).dtype))


class ModuleList(Module):
    def __init__(self, modules=()):
        super().__init__()
        self._items: list[Module] = []
        for m in modules:
            self.append(m)

    def append(self, m: Module) -> None:
        self._children[str(len(self._items))] = m
        self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


def _uniform(rng: np.random.Generator, shape, bound: float) -> np.ndarray:
    return rng.uniform(-bound, bound, size=shape)


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, bias: bool = True, rng: np.random.Generator | None = None):
        super().__init__()
        rng = rng or np.random.default_rng()
        bound = 1.0 / np.sqrt(d_in)
        self.weight = Parameter(_uniform(rng, (d_out, d_in), bound))
        self.bias = Parameter(_uniform(rng, (d_out,), bound)) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class Conv2d(Module):
    def __init__(
        self,
        c_in: int,
        c_out: int,
        k: int,
        stride: int = 1,
        padding: int = 0,
        dilation: int = 1,
        groups: int = 1,
        bias: bool = True,
        rng: np.random.Generator | None = None,
    ):
        super().__init__()
        rng = rng or np.random.default_rng()
        fan_in = (c_in // groups) * k * k
        bound = 1.0 / np.sqrt(fan_in)
        self.weight = Parameter(_uniform(rng, (c_out, c_in // groups, k, k), bound))
        self.bias = Parameter(_uniform(rng, (c_out,), bound)) if bias else None
        self.stride, self.padding, self.dilation, self.groups = stride, padding, dilation, groups

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.dilation, self.groups)


class LayerNorm(Module):
    def __init__(self, dim: int, eps: float = 1e-5, axis: int = -1):
        super().__init__()
        self.weight = Parameter(np.ones(dim))
        self.bias = Parameter(np.zeros(dim))
        self.eps, self.axis = eps, axis

    def forward(self, x: Tensor) -> Tensor:
        return F.layer_norm(x, self.weight, self.bias, self.eps, self.axis)


class BatchNorm2d(Module):
    def __init__(self, channels: int, eps: float = 1e-5, momentum: float = 0.1):
        super().__init__()
        self.weight = Parameter(np.ones(channels))
        self.bias = Parameter(np.zeros(channels))
        self.register_buffer("running_mean", np.zeros(channels, dtype=get_default_dtype()))
        self.register_buffer("running_var", np.ones(channels, dtype=get_default_dtype()))
        self.eps, self.momentum = eps, momentum

    def forward(self, x: Tensor) -> Tensor:
        return F.batch_norm(
            x, self.weight, self.bias, self.running_mean, self.running_var, self.training, self.momentum, self.eps
        )
