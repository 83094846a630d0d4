"""Single-modality diffusion primitives.

Functions accept :class:`~jointdiff.numerics.Tensor` or numpy arrays and
return Tensors in the input's dtype. Timesteps are local to one modality's
schedule, with alpha_bar(0) = 1 meaning clean data.
"""
from __future__ import annotations

import numpy as np

from .errors import ContractError, DimensionError
from .numerics import Rng, Tensor, mean
from .schedule import Schedule


def _arr(x) -> np.ndarray:
    return x.data if isinstance(x, Tensor) else np.asarray(x, dtype=np.float32)


def _same_shape(a: np.ndarray, b: np.ndarray, op: str):
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes differ, {a.shape} vs {b.shape}")


def _check_t(t: int, sched: Schedule, low: int, op: str):
    if isinstance(t, bool) or int(t) != t or not low <= t <= sched.T_max:
        raise ContractError(f"{op}: timestep {t!r} outside [{low}, {sched.T_max}]")


def q_sample(x0, t: int, eps, sched: Schedule) -> Tensor:
    """Corrupt ``x0`` directly to step ``t``: sqrt(ab)*x0 + sqrt(1-ab)*eps."""
    a, e = _arr(x0), _arr(eps)
    _same_shape(a, e, "q_sample")
    _check_t(t, sched, 0, "q_sample")
    ab = sched.alpha_bar(int(t))
    out = np.sqrt(ab) * a.astype(np.float64) + np.sqrt(1.0 - ab) * e.astype(np.float64)
    return Tensor(out.astype(a.dtype))


def _coef(values: np.ndarray, ndim: int) -> np.ndarray:
    return values.reshape(values.shape + (1,) * (ndim - 1))


def q_sample_batch(x0: np.ndarray, t: np.ndarray, eps: np.ndarray, sched: Schedule) -> np.ndarray:
    """Batched :func:`q_sample` with one timestep per leading-axis item."""
    _same_shape(x0, eps, "q_sample_batch")
    ab = _coef(np.asarray(sched.alpha_bar(np.asarray(t))), x0.ndim)
    return (np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps).astype(x0.dtype)


def predict_x0(x_t, eps_hat, t: int, sched: Schedule) -> Tensor:
    """Clean-data estimate (x_t - sqrt(1-ab)*eps_hat) / sqrt(ab)."""
    x, e = _arr(x_t), _arr(eps_hat)
    _same_shape(x, e, "predict_x0")
    _check_t(t, sched, 1, "predict_x0")
    ab = sched.alpha_bar(int(t))
    out = (x.astype(np.float64) - np.sqrt(1.0 - ab) * e.astype(np.float64)) / np.sqrt(ab)
    return Tensor(out.astype(x.dtype))


def predict_x0_batch(x_t: np.ndarray, eps_hat: np.ndarray, t: np.ndarray, sched: Schedule) -> np.ndarray:
    t = np.asarray(t)
    if np.any(t < 1):
        raise ContractError("predict_x0 is undefined at timestep 0")
    ab = _coef(np.asarray(sched.alpha_bar(t)), x_t.ndim)
    return ((x_t.astype(np.float64) - np.sqrt(1.0 - ab) * eps_hat) / np.sqrt(ab)).astype(x_t.dtype)


def ddim_step(x_t, eps_hat, t: int, t_prev: int, sched: Schedule) -> Tensor:
    """Deterministic DDIM move from step ``t`` to an earlier step ``t_prev``."""
    if not 0 <= t_prev < t:
        raise ContractError(f"ddim_step needs 0 <= t_prev < t, got t={t}, t_prev={t_prev}")
    x0_hat = predict_x0(x_t, eps_hat, t, sched).data.astype(np.float64)
    if t_prev == 0:
        return Tensor(x0_hat.astype(_arr(x_t).dtype))
    ab_prev = sched.alpha_bar(int(t_prev))
    out = np.sqrt(ab_prev) * x0_hat + np.sqrt(1.0 - ab_prev) * _arr(eps_hat).astype(np.float64)
    return Tensor(out.astype(_arr(x_t).dtype))


def ddpm_mean_var(x_t, eps_hat, t: int, sched: Schedule) -> tuple[np.ndarray, float]:
    """Reverse-step Gaussian mean and variance for ancestral sampling."""
    x, e = _arr(x_t).astype(np.float64), _arr(eps_hat).astype(np.float64)
    _same_shape(x, e, "ddpm_step")
    _check_t(t, sched, 1, "ddpm_step")
    beta = sched.beta(int(t))
    ab, ab_prev = sched.alpha_bar(int(t)), sched.alpha_bar(int(t) - 1)
    mu = (x - beta / np.sqrt(1.0 - ab) * e) / np.sqrt(1.0 - beta)
    var = (1.0 - ab_prev) / (1.0 - ab) * beta
    return mu, var


def ddpm_step(x_t, eps_hat, t: int, sched: Schedule, rng: Rng) -> Tensor:
    """Ancestral step to ``t - 1``; the final step (t = 1) adds no noise."""
    mu, var = ddpm_mean_var(x_t, eps_hat, t, sched)
    if t > 1:
        mu = mu + np.sqrt(var) * rng.normal(mu.shape, dtype=np.float64)
    return Tensor(mu.astype(_arr(x_t).dtype))


def cfg_combine(eps_cond, eps_uncond, w: float):
    """Classifier-free guidance: eps_uncond + w * (eps_cond - eps_uncond)."""
    c, u = _arr(eps_cond), _arr(eps_uncond)
    _same_shape(c, u, "cfg_combine")
    if w == 1:
        out = c.copy()
    else:
        out = (u.astype(np.float64) + w * (c.astype(np.float64) - u)).astype(c.dtype)
    return Tensor(out) if isinstance(eps_cond, Tensor) else out


def noise_loss(eps_hat: Tensor, eps) -> Tensor:
    """Mean over all elements of the squared noise-prediction error."""
    e = eps if isinstance(eps, Tensor) else Tensor(np.asarray(eps, dtype=eps_hat.dtype))
    if eps_hat.shape != e.shape:
        raise DimensionError(f"noise_loss: shapes differ, {eps_hat.shape} vs {e.shape}")
    diff = eps_hat - e
    return mean(diff * diff)
