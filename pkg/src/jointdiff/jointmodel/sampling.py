"""Joint generation with per-modality local timesteps."""
from __future__ import annotations

from dataclasses import replace

import numpy as np

from ..diffusion import cfg_combine, ddim_step, predict_x0_batch
from ..errors import ContractError, NonFiniteError
from ..numerics import Rng, no_grad
from ..schedule import TimestepMap, map_timesteps
from .training import X0_CLIP

DEFAULT_GUIDANCE = (7.5, 2.5)


def _as_array(x):
    return np.asarray(getattr(x, "data", x))


def initial_noise(rng: Rng, n: int, shape_v, shape_a):
    """Per-sample Gaussian starts drawn from sub-streams, independent of batch size."""
    xv, xa = [], []
    for i in range(n):
        r = rng.child(i)
        xv.append(r.normal(shape_v))
        xa.append(r.normal(shape_a))
    return np.stack(xv), np.stack(xa)


def _guided(model, x_v, x_a, m, n, labels, sc, w_v, w_a):
    b = len(x_v)
    if w_v == 1 and w_a == 1:
        ev, ea = model.predict_noise(x_v, x_a, m, n, labels, sc)
        return _as_array(ev), _as_array(ea)
    null = np.full(b, model.null_label)
    sc2 = None if sc is None else (np.concatenate([sc[0], sc[0]]), np.concatenate([sc[1], sc[1]]))
    ev, ea = model.predict_noise(
        np.concatenate([x_v, x_v]), np.concatenate([x_a, x_a]), m, n,
        np.concatenate([labels, null]), sc2,
    )
    ev, ea = _as_array(ev), _as_array(ea)
    return cfg_combine(ev[:b], ev[b:], w_v), cfg_combine(ea[:b], ea[b:], w_a)


def joint_generate(model, tmap: TimestepMap, labels, guidance=DEFAULT_GUIDANCE, rng: Rng | None = None,
                   T_steps: int | None = None, self_condition: bool = True, return_trace: bool = False):
    """Generate video/audio latents by walking global steps T..1.

    At each global step the local steps (m(t), n(t)) come from ``tmap``; both
    noises are predicted jointly (with classifier-free guidance weights
    ``guidance = (w_v, w_a)``) and each modality takes a DDIM step to its next
    local step. A modality whose local step does not change is left as is.
    The previous step's clean-data estimate is fed back as self-conditioning.

    ``model`` is anything with ``predict_noise``, ``schedule_v``,
    ``schedule_a``, ``null_label`` and ``config`` latent shapes.
    """
    if T_steps is not None:
        if T_steps < 1:
            raise ContractError(f"T_steps must be >= 1, got {T_steps}")
        tmap = replace(tmap, T=int(T_steps))
    sv, sa = model.schedule_v, model.schedule_a
    if tmap.T_v != sv.T_max or tmap.T_a != sa.T_max:
        raise ContractError(f"timestep map ({tmap.T_v}, {tmap.T_a}) does not match schedules ({sv.T_max}, {sa.T_max})")
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    rng = rng or Rng(0)
    w_v, w_a = guidance
    cfg = model.config
    x_v, x_a = initial_noise(rng, len(labels), cfg.video.latent_shape, cfg.audio.latent_shape)
    sc = None
    trace = []
    with no_grad():
        for t in range(tmap.T, 0, -1):
            m, n = map_timesteps(tmap, t)
            m_prev, n_prev = map_timesteps(tmap, t - 1)
            trace.append((t, m, n))
            if m == m_prev and n == n_prev:
                continue
            ev, ea = _guided(model, x_v, x_a, m, n, labels, sc if self_condition else None, w_v, w_a)
            x0_v = predict_x0_batch(x_v, ev, np.full(len(labels), m), sv) if m > 0 else x_v
            x0_a = predict_x0_batch(x_a, ea, np.full(len(labels), n), sa) if n > 0 else x_a
            if m_prev < m:
                x_v = ddim_step(x_v, ev, m, m_prev, sv).data
            if n_prev < n:
                x_a = ddim_step(x_a, ea, n, n_prev, sa).data
            sc = (np.clip(x0_v, -X0_CLIP, X0_CLIP), np.clip(x0_a, -X0_CLIP, X0_CLIP))
            if not (np.isfinite(x_v).all() and np.isfinite(x_a).all()):
                raise NonFiniteError(f"generation diverged at global step {t}")
    if return_trace:
        return x_v, x_a, trace
    return x_v, x_a


class OracleDenoiser:
    """Returns the exact noise implied by fixed clean latents; for testing samplers."""

    def __init__(self, x0_v, x0_a, schedule_v, schedule_a, config, n_labels: int = 1):
        self.x0_v = np.asarray(x0_v, dtype=np.float64)
        self.x0_a = np.asarray(x0_a, dtype=np.float64)
        self.schedule_v, self.schedule_a = schedule_v, schedule_a
        self.config = config
        self.null_label = n_labels

    @staticmethod
    def _eps(x, x0, t, sched):
        if t == 0:
            return np.zeros_like(x)
        ab = sched.alpha_bar(int(t))
        return ((x - np.sqrt(ab) * x0) / np.sqrt(1.0 - ab)).astype(x.dtype)

    def predict_noise(self, x_v, x_a, t_v, t_a, labels, self_cond=None):
        t_v = int(np.atleast_1d(t_v)[0])
        t_a = int(np.atleast_1d(t_a)[0])
        x_v, x_a = _as_array(x_v), _as_array(x_a)
        return self._eps(x_v, self.x0_v, t_v, self.schedule_v), self._eps(x_a, self.x0_a, t_a, self.schedule_a)
