"""Joint noise-prediction loss and the training loop."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..diffusion import noise_loss, predict_x0_batch, q_sample_batch
from ..errors import DataError, NonFiniteError
from ..numerics import Adam, Rng, Tensor, backward, no_grad

log = logging.getLogger(__name__)

SELF_COND_PROB = 0.5
LABEL_DROP_PROB = 0.1
X0_CLIP = 6.0

@dataclass
class LossParts:
    total: Tensor
    video: float
    audio: float
    t_v: np.ndarray
    t_a: np.ndarray
    self_conditioned: bool

def sample_local_timesteps(rng: Rng, n: int, T_v: int, T_a: int) -> tuple[np.ndarray, np.ndarray]:
    """Independent uniform draws t_v ~ U{1..T_v}, t_a ~ U{1..T_a}."""
    return rng.integers(1, T_v, size=n), rng.integers(1, T_a, size=n)

def self_condition_estimate(model, xt_v, xt_a, t_v, t_a, labels):
    """Gradient-free first pass: clipped clean-data estimates for both modalities."""
    with no_grad():
        ev, ea = model.predict_noise(xt_v, xt_a, t_v, t_a, labels)
    x0_v = np.clip(predict_x0_batch(xt_v, ev.data, t_v, model.schedule_v), -X0_CLIP, X0_CLIP)
    x0_a = np.clip(predict_x0_batch(xt_a, ea.data, t_a, model.schedule_a), -X0_CLIP, X0_CLIP)
    return x0_v, x0_a

def joint_loss(model, batch, rng: Rng, self_cond_prob: float = SELF_COND_PROB,
               label_drop_prob: float = LABEL_DROP_PROB) -> LossParts:
    """Sum of per-modality noise-prediction losses at independent local timesteps.

    ``batch`` is (x0_v [B,F,Dv], x0_a [B,tau,Da], labels [B]).
    """
    x0_v, x0_a, labels = batch
    b = len(x0_v)
    if b == 0:
        raise DataError("empty batch")
    t_v, t_a = sample_local_timesteps(rng, b, model.schedule_v.T_max, model.schedule_a.T_max)
    eps_v = rng.normal(x0_v.shape)
    eps_a = rng.normal(x0_a.shape)
    drop = rng.uniform(size=b) < label_drop_prob
    labels = np.where(drop, model.null_label, np.asarray(labels))
    use_sc = rng.random() < self_cond_prob
    xt_v = q_sample_batch(x0_v, t_v, eps_v, model.schedule_v)
    xt_a = q_sample_batch(x0_a, t_a, eps_a, model.schedule_a)
    sc = self_condition_estimate(model, xt_v, xt_a, t_v, t_a, labels) if use_sc else None
    pv, pa = model.predict_noise(xt_v, xt_a, t_v, t_a, labels, sc)
    lv = noise_loss(pv, eps_v)
    la = noise_loss(pa, eps_a)
    return LossParts(lv + la, lv.item(), la.item(), t_v, t_a, use_sc)

@dataclass
class TrainOptions:
    lr: float = 1e-4
    batch_size: int = 32
    epochs: int = 50
    seed: int = 0
    freeze_core_after: int | None = None
    save_every: int = 0
    checkpoint_path: str | None = None

@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    steps: int = 0
    last_epoch: int = 0
    aborted: bool = False
    optimizer: Adam | None = None

def train(model, dataset, opts: TrainOptions, optimizer: Adam | None = None, start_epoch: int = 0,
          history: list[float] | None = None, on_epoch=None) -> TrainReport:
    """Seeded mini-batch Adam training on ``dataset``.

    Epochs are numbered from ``start_epoch + 1``. Every draw is derived from
    (seed, epoch, step), so a resumed run reproduces an uninterrupted one.
    A non-finite loss aborts with :class:`NonFiniteError`; when a checkpoint
    path is set the last good checkpoint is left in place.
    """
    from .checkpoint import save_checkpoint

    if len(dataset) == 0:
        raise DataError("cannot train on an empty dataset")
    if opts.batch_size < 1 or opts.epochs < 0 or opts.lr < 0:
        raise DataError("batch_size must be >= 1, epochs >= 0 and lr >= 0")
    xv, xa, labels = dataset.arrays()
    params = model.named_parameters()
    opt = optimizer or Adam(params, lr=opts.lr)
    opt.lr = opts.lr
    base = Rng(opts.seed)
    report = TrainReport(list(history or []), last_epoch=start_epoch)
    n = len(xv)
    for epoch in range(start_epoch + 1, start_epoch + opts.epochs + 1):
        trainable = None
        if opts.freeze_core_after is not None and epoch > opts.freeze_core_after:
            trainable = model.added_parameter_names()
        order = base.child(epoch).permutation(n)
        total, count = 0.0, 0
        for step, lo in enumerate(range(0, n, opts.batch_size)):
            idx = order[lo: lo + opts.batch_size]
            try:
                parts = joint_loss(model, (xv[idx], xa[idx], labels[idx]), base.child(epoch, step))
            except NonFiniteError as exc:
                report.aborted = True
                raise NonFiniteError(f"non-finite values at epoch {epoch}, step {step}: {exc}") from exc
            value = parts.total.item()
            if not math.isfinite(value):
                report.aborted = True
                raise NonFiniteError(f"loss is {value} at epoch {epoch}, step {step}")
            opt.zero_grad()
            backward(parts.total)
            opt.step(trainable)
            total += value * len(idx)
            count += len(idx)
            report.steps += 1
        for name, p in params.items():
            if not np.isfinite(p.data).all():
                report.aborted = True
                raise NonFiniteError(f"parameter {name} became non-finite at epoch {epoch}")
        report.epoch_losses.append(total / count)
        report.last_epoch = epoch
        log.info("epoch %d loss %.5f", epoch, report.epoch_losses[-1])
        if on_epoch is not None:
            on_epoch(epoch, report.epoch_losses[-1])
        if opts.checkpoint_path and opts.save_every and epoch % opts.save_every == 0:
            save_checkpoint(opts.checkpoint_path, model, opt, epoch=epoch, history=report.epoch_losses)
    if opts.checkpoint_path and report.last_epoch > start_epoch:
        save_checkpoint(opts.checkpoint_path, model, opt, epoch=report.last_epoch, history=report.epoch_losses)
    report.optimizer = opt
    return report
