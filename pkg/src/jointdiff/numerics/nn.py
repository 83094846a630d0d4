"""Parameter containers and the layers the toy denoisers are built from."""
from __future__ import annotations

import math
from collections import OrderedDict

import numpy as np

from .functional import layer_norm, softmax
from .rng import Rng
from .tensor import Tensor, silu


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float32), requires_grad=True)


class Module:
    """Base class: parameters are discovered by walking attributes."""

    def named_parameters(self, prefix: str = "") -> "OrderedDict[str, Tensor]":
        out: OrderedDict[str, Tensor] = OrderedDict()
        for key, value in vars(self).items():
            name = f"{prefix}{key}"
            if isinstance(value, Tensor) and value.requires_grad:
                out[name] = value
            elif isinstance(value, Module):
                out.update(value.named_parameters(name + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.named_parameters(f"{name}.{i}."))
        return out

    def parameters(self) -> list[Tensor]:
        return list(self.named_parameters().values())

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def num_parameters(self) -> int:
        return int(sum(p.size for p in self.parameters()))

    def astype(self, dtype):
        for p in self.parameters():
            p.data = p.data.astype(dtype)
        return self


class Linear(Module):
    def __init__(self, in_dim: int, out_dim: int, rng: Rng, zero: bool = False, bias: bool = True):
        w = rng.normal((in_dim, out_dim))  # drawn even when zeroed, so later layers see the same stream
        self.weight = parameter(np.zeros_like(w) if zero else w / math.sqrt(in_dim))
        self.bias = parameter(np.zeros(out_dim)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        y = x @ self.weight
        return y + self.bias if self.bias is not None else y


class LayerNorm(Module):
    def __init__(self, dim: int):
        self.weight = parameter(np.ones(dim))
        self.bias = parameter(np.zeros(dim))

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.weight, self.bias)


class FeedForward(Module):
    def __init__(self, dim: int, rng: Rng, mult: int = 2, zero_out: bool = False):
        self.fc1 = Linear(dim, dim * mult, rng)
        self.fc2 = Linear(dim * mult, dim, rng, zero=zero_out)

    def __call__(self, x: Tensor) -> Tensor:
        return self.fc2(silu(self.fc1(x)))


class Attention(Module):
    """Multi-head scaled dot-product attention over the frame axis.

    Inputs are [batch, frames, dim]; ``context`` (keys/values) defaults to the
    queries' own sequence.
    """

    def __init__(self, dim: int, heads: int, rng: Rng, context_dim: int | None = None, zero_out: bool = False):
        if dim % heads:
            raise ValueError(f"dim {dim} not divisible by heads {heads}")
        context_dim = context_dim or dim
        self.heads = heads
        self.q = Linear(dim, dim, rng, bias=False)
        self.k = Linear(context_dim, dim, rng, bias=False)
        self.v = Linear(context_dim, dim, rng, bias=False)
        self.o = Linear(dim, dim, rng, zero=zero_out)

    def __call__(self, x: Tensor, context: Tensor | None = None) -> Tensor:
        ctx = x if context is None else context
        b, n, d = x.shape
        m = ctx.shape[1]
        h = self.heads
        dh = d // h
        q = self.q(x).reshape(b, n, h, dh).transpose(0, 2, 1, 3)
        k = self.k(ctx).reshape(b, m, h, dh).transpose(0, 2, 3, 1)
        v = self.v(ctx).reshape(b, m, h, dh).transpose(0, 2, 1, 3)
        weights = softmax((q @ k) * (1.0 / math.sqrt(dh)), axis=-1)
        out = (weights @ v).transpose(0, 2, 1, 3).reshape(b, n, d)
        return self.o(out)


class TransformerBlock(Module):
    """Pre-norm attention + feed-forward block with residual connections."""

    def __init__(self, dim: int, heads: int, rng: Rng, context_dim: int | None = None, zero_out: bool = False):
        self.norm1 = LayerNorm(dim)
        self.attn = Attention(dim, heads, rng, context_dim=context_dim, zero_out=zero_out)
        self.norm2 = LayerNorm(dim)
        self.ff = FeedForward(dim, rng, zero_out=zero_out)

    def __call__(self, x: Tensor, context: Tensor | None = None) -> Tensor:
        x = x + self.attn(self.norm1(x), context)
        return x + self.ff(self.norm2(x))
