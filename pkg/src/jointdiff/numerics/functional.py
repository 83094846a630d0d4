"""Composite differentiable operations with fused backward rules."""
from __future__ import annotations

import numpy as np

from ..errors import DimensionError
from .tensor import Tensor, _make, as_tensor, matmul


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    """Max-subtracted softmax along ``axis``."""
    x = as_tensor(x)
    if not -x.ndim <= axis < x.ndim:
        raise DimensionError(f"softmax axis {axis} out of range for shape {x.shape}")
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(shifted)
    out = e / e.sum(axis=axis, keepdims=True, dtype=np.float64).astype(x.dtype)

    def bw(g):
        inner = (g * out).sum(axis=axis, keepdims=True, dtype=np.float64).astype(x.dtype)
        return (out * (g - inner),)

    return _make(out, (x,), bw, "softmax")


def layer_norm(x: Tensor, weight: Tensor, bias: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then scale and shift."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    n = x.shape[-1]
    mu = x.data.mean(axis=-1, keepdims=True, dtype=np.float64)
    xc = x.data - mu.astype(x.dtype)
    var = (xc.astype(np.float64) ** 2).mean(axis=-1, keepdims=True)
    inv = (1.0 / np.sqrt(var + eps)).astype(x.dtype)
    xhat = xc * inv
    out = xhat * weight.data + bias.data

    def bw(g):
        gx = gw = gb = None
        lead = tuple(range(g.ndim - 1))
        if weight.requires_grad:
            gw = (g * xhat).sum(axis=lead)
        if bias.requires_grad:
            gb = g.sum(axis=lead)
        if x.requires_grad:
            gh = g * weight.data
            gx = inv / n * (
                n * gh
                - gh.sum(axis=-1, keepdims=True)
                - xhat * (gh * xhat).sum(axis=-1, keepdims=True)
            )
        return gx, gw, gb

    return _make(out, (x, weight, bias), bw, "layer_norm")


def interp_matrix(src_len: int, dst_len: int, dtype=np.float32) -> np.ndarray:
    """Align-corners linear interpolation weights of shape [dst_len, src_len].

    Positions are computed in exact integer arithmetic so that matching grid
    points carry weight exactly 1.0.
    """
    if src_len < 1 or dst_len < 1:
        raise DimensionError(f"interpolation lengths must be >= 1, got {src_len} -> {dst_len}")
    w = np.zeros((dst_len, src_len), dtype=np.float64)
    if src_len == 1:
        w[:, 0] = 1.0
        return w.astype(dtype)
    if dst_len == 1:
        w[0, 0] = 1.0
        return w.astype(dtype)
    den = dst_len - 1
    for f in range(dst_len):
        num = f * (src_len - 1)
        i0, rem = divmod(num, den)
        if rem == 0:
            w[f, i0] = 1.0
        else:
            frac = rem / den
            w[f, i0] = 1.0 - frac
            w[f, i0 + 1] = frac
    return w.astype(dtype)


def interp_time(x: Tensor, target_len: int) -> Tensor:
    """Linearly resample the time axis (second to last) to ``target_len`` frames.

    ``x`` has shape [..., frames, channels]. Endpoints are preserved
    (align-corners); a single source frame is broadcast.
    """
    x = as_tensor(x)
    if x.ndim < 2 or x.shape[-2] == 0 or x.shape[-1] == 0:
        raise DimensionError(f"interp_time needs a non-empty [..., frames, channels] tensor, got {x.shape}")
    if target_len < 1:
        raise DimensionError(f"target_len must be >= 1, got {target_len}")
    if x.shape[-2] == target_len:
        return x
    w = Tensor(interp_matrix(x.shape[-2], target_len, dtype=x.dtype))
    return matmul(w, x)
