"""Connectors, injection blocks and the per-modality denoiser branch."""
from __future__ import annotations

import math

import numpy as np

from ..errors import ContractError, DimensionError
from ..numerics import Rng, Tensor, as_tensor, concat, interp_time, silu
from ..numerics.nn import LayerNorm, Linear, Module, TransformerBlock, parameter
from .config import BranchConfig


def sinusoidal(positions: np.ndarray, dim: int, scale: float = 1000.0) -> np.ndarray:
    """[len(positions), dim] sin/cos features of ``positions * scale``."""
    half = dim // 2
    freqs = np.exp(-math.log(10000.0) * np.arange(half) / half)
    angles = np.asarray(positions, dtype=np.float64)[:, None] * scale * freqs[None, :]
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=1).astype(np.float32)


def shift_frames(x: Tensor, offset: int) -> Tensor:
    """out[:, i] = x[:, i + offset], zero outside the valid range."""
    if offset == 0:
        return x
    b, n, c = x.shape
    k = min(abs(offset), n)
    pad = Tensor(np.zeros((b, k, c), dtype=x.dtype))
    if offset > 0:
        return concat([x[:, k:, :], pad], axis=1)
    return concat([pad, x[:, : n - k, :]], axis=1)


class Connector(Module):
    """Per-frame encoder of (noisy latent ++ self-conditioning estimate).

    Frame ``i`` of the output depends only on input frames within
    ``receptive_field`` of ``i``.
    """

    def __init__(self, in_dim: int, out_dim: int, context: int, rng: Rng, zero: bool = False):
        self.context = context
        width = (2 * context + 1) * 2 * in_dim
        self.fc1 = Linear(width, out_dim, rng, zero=zero)
        self.fc2 = Linear(out_dim, out_dim, rng, zero=zero)

    @property
    def receptive_field(self) -> int:
        return self.context

    def __call__(self, x_noisy, x0_self) -> Tensor:
        x_noisy, x0_self = as_tensor(x_noisy), as_tensor(x0_self)
        if x_noisy.shape != x0_self.shape:
            raise DimensionError(f"connector inputs differ in shape: {x_noisy.shape} vs {x0_self.shape}")
        x = concat([x_noisy, x0_self], axis=-1)
        if self.context:
            x = concat([shift_frames(x, o) for o in range(-self.context, self.context + 1)], axis=-1)
        return self.fc2(silu(self.fc1(x)))


class InjectBlock(Module):
    """Feeds the other modality's connector features into a branch.

    ``cmc_pe``: features are projected, resampled along time to the target's
    frame count, added to the target like a positional encoding, and mixed by
    a self-attention block. ``cross_attention``: the target attends to the
    features (pooled to one vector when ``pool`` is set) as keys and values.
    Attention and feed-forward outputs start at zero so a fresh block is an
    identity on the target (plus the additive term for CMC-PE).
    """

    def __init__(self, mode: str, dim: int, cond_dim: int, heads: int, rng: Rng, pool: bool = True):
        if mode not in ("cmc_pe", "cross_attention"):
            raise ContractError(f"unknown inject mode {mode!r}")
        self.mode = mode
        self.pool = pool
        if mode == "cmc_pe":
            self.proj = Linear(cond_dim, dim, rng)
            self.block = TransformerBlock(dim, heads, rng, zero_out=True)
        else:
            self.block = TransformerBlock(dim, heads, rng, context_dim=cond_dim, zero_out=True)

    def additive_term(self, cond: Tensor, target_frames: int) -> Tensor:
        return interp_time(self.proj(cond), target_frames)

    def __call__(self, target: Tensor, cond: Tensor) -> Tensor:
        if self.mode == "cmc_pe":
            return cmc_pe_inject(target, cond, self)
        return cross_attn_inject(target, cond, self)


def cmc_pe_inject(target: Tensor, cond: Tensor, block: InjectBlock) -> Tensor:
    if block.mode != "cmc_pe":
        raise ContractError(f"cmc_pe_inject called with a {block.mode} block")
    return block.block(target + block.additive_term(cond, target.shape[1]))


def cross_attn_inject(target: Tensor, cond: Tensor, block: InjectBlock) -> Tensor:
    if block.mode != "cross_attention":
        raise ContractError(f"cross_attn_inject called with a {block.mode} block")
    cond = as_tensor(cond)
    if block.pool and cond.shape[1] > 1:
        cond = cond.mean(axis=1, keepdims=True)
    return block.block(target, context=cond)


class Branch(Module):
    """Toy denoiser for one modality.

    Per-frame input projection, fixed sinusoidal frame positions, an embedding
    of both local timesteps and the label, ``n_layers`` temporal transformer
    blocks interleaved with the injection sites, and a per-frame output head.
    """

    def __init__(self, cfg: BranchConfig, inject_mode: str, cond_dim: int, n_labels: int,
                 time_embed_dim: int, rng: Rng, pool: bool = True):
        h = cfg.hidden_dim
        self.cfg = cfg
        self.time_embed_dim = time_embed_dim
        self.in_proj = Linear(2 * cfg.dim, h, rng)
        self.pos = sinusoidal(np.arange(cfg.frames) / cfg.frames, h, scale=float(cfg.frames))
        self.time1 = Linear(2 * time_embed_dim, h, rng)
        self.time2 = Linear(h, h, rng)
        self.label_table = parameter(rng.normal((n_labels + 1, h)) * 0.1)
        self.core = [TransformerBlock(h, cfg.heads, rng) for _ in range(cfg.n_layers)]
        if inject_mode == "none":
            self.inject = []
        else:
            self.inject = [InjectBlock(inject_mode, h, cond_dim, cfg.heads, rng, pool=pool)
                           for _ in range(cfg.n_inject_sites)]
        self.out_norm = LayerNorm(h)
        self.out_proj = Linear(h, cfg.dim, rng)

    def site_schedule(self) -> list[int]:
        """Index of the core block each injection site follows."""
        n, k = self.cfg.n_layers, len(self.inject)
        return [min(i * n // k, n - 1) for i in range(k)] if k else []

    def __call__(self, x, x0_self, time_feats: np.ndarray, labels: np.ndarray, cond: Tensor | None) -> Tensor:
        h = self.in_proj(concat([as_tensor(x), as_tensor(x0_self)], axis=-1))
        temb = self.time2(silu(self.time1(Tensor(time_feats, dtype=h.dtype))))
        lab = self.label_table[np.asarray(labels, dtype=np.int64)]
        b = h.shape[0]
        h = h + Tensor(self.pos.astype(h.dtype)) + (temb + lab).reshape(b, 1, -1)
        after = self.site_schedule()
        for i, core in enumerate(self.core):
            h = core(h)
            for site, j in zip(self.inject, after):
                if j == i:
                    h = site(h, cond)
        return self.out_proj(self.out_norm(h))
