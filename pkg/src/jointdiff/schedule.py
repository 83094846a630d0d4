"""Noise schedules, the global-to-local timestep map, and loss profiling."""
from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, ContractError, DataError

log = logging.getLogger(__name__)

SCHEDULE_KINDS = ("linear", "scaled_linear")


@dataclass(frozen=True)
class Schedule:
    """Per-step variances ``betas`` and cumulative products ``alpha_bars``.

    Both arrays hold steps 1..T_max at indices 0..T_max-1. Use
    :meth:`alpha_bar` for 1-based access with the convention alpha_bar(0) = 1.
    """

    kind: str
    T_max: int
    beta_start: float
    beta_end: float
    betas: np.ndarray = field(repr=False, compare=False)
    alpha_bars: np.ndarray = field(repr=False, compare=False)

    def alpha_bar(self, t) -> np.ndarray | float:
        t_arr = np.asarray(t)
        if np.any(t_arr < 0) or np.any(t_arr > self.T_max):
            raise ContractError(f"timestep {t} outside [0, {self.T_max}]")
        padded = np.concatenate([[1.0], self.alpha_bars])
        out = padded[t_arr]
        return float(out) if out.ndim == 0 else out

    def beta(self, t: int) -> float:
        if not 1 <= t <= self.T_max:
            raise ContractError(f"timestep {t} outside [1, {self.T_max}]")
        return float(self.betas[t - 1])

    def to_dict(self) -> dict:
        return {"kind": self.kind, "T_max": self.T_max, "beta_start": self.beta_start, "beta_end": self.beta_end}


def build_schedule(kind: str, T_max: int, beta_start: float, beta_end: float) -> Schedule:
    if kind not in SCHEDULE_KINDS:
        raise ConfigError(f"unknown schedule kind {kind!r}; expected one of {SCHEDULE_KINDS}", field="kind")
    if int(T_max) != T_max or T_max < 1:
        raise ConfigError(f"T_max must be a positive integer, got {T_max}", field="T_max")
    if not 0.0 < beta_start <= beta_end < 1.0:
        raise ConfigError(
            f"need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}", field="beta_start"
        )
    T_max = int(T_max)
    if kind == "linear":
        betas = np.linspace(beta_start, beta_end, T_max, dtype=np.float64)
    else:
        betas = np.linspace(math.sqrt(beta_start), math.sqrt(beta_end), T_max, dtype=np.float64) ** 2
    alpha_bars = np.cumprod(1.0 - betas)
    if alpha_bars[-1] >= 0.05:
        log.warning("terminal alpha_bar %.4f >= 0.05: x_T is far from an isotropic Gaussian", alpha_bars[-1])
    betas.setflags(write=False)
    alpha_bars.setflags(write=False)
    return Schedule(kind, T_max, float(beta_start), float(beta_end), betas, alpha_bars)


def schedule_from_dict(d: dict) -> Schedule:
    return build_schedule(d["kind"], d["T_max"], d["beta_start"], d["beta_end"])


# Video collapses to noise faster than audio (see README for the choice).
DEFAULT_VIDEO_SCHEDULE = {"kind": "linear", "T_max": 1000, "beta_start": 1e-4, "beta_end": 2e-2}
DEFAULT_AUDIO_SCHEDULE = {"kind": "scaled_linear", "T_max": 1000, "beta_start": 8.5e-4, "beta_end": 1.2e-2}


# -- timestep adjustment ---------------------------------------------------
@dataclass(frozen=True)
class TimestepMap:
    """Global step t in [0, T] -> local steps (video m(t), audio n(t))."""

    T: int
    T_v: int
    T_a: int
    gamma: float = 1.5

    def __post_init__(self):
        for name in ("T", "T_v", "T_a"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {v}", field=name)
        if not self.gamma > 0 or not math.isfinite(self.gamma):
            raise ConfigError(f"gamma must be a finite positive number, got {self.gamma}", field="gamma")

    def to_dict(self) -> dict:
        return {"T": self.T, "T_v": self.T_v, "T_a": self.T_a, "gamma": self.gamma}


def round_half_away(x: float) -> int:
    return int(math.floor(abs(x) + 0.5)) * (1 if x >= 0 else -1)


def unrounded_timesteps(tmap: TimestepMap, t) -> tuple[float, float]:
    """Real-valued local steps before rounding."""
    if not 0 <= t <= tmap.T:
        raise ContractError(f"global timestep {t} outside [0, {tmap.T}]")
    u = t / tmap.T
    s = math.sqrt(tmap.gamma)
    return tmap.T_v * u ** s, tmap.T_a * u ** (1.0 / s)


def map_timesteps(tmap: TimestepMap, t: int) -> tuple[int, int]:
    """Local (video, audio) timesteps for global step ``t``.

    Video follows (t/T)^sqrt(gamma) and audio (t/T)^(1/sqrt(gamma)), so that
    m/T_v equals (n/T_a)^gamma before rounding. Rounding is half away from
    zero, clamped to the valid local range.
    """
    if isinstance(t, bool) or int(t) != t:
        raise ContractError(f"global timestep must be an integer, got {t!r}")
    m, n = unrounded_timesteps(tmap, int(t))
    return (min(max(round_half_away(m), 0), tmap.T_v), min(max(round_half_away(n), 0), tmap.T_a))


def local_sequences(tmap: TimestepMap) -> tuple[list[int], list[int]]:
    """Local steps for global t = T, T-1, ..., 0."""
    ms, ns = [], []
    for t in range(tmap.T, -1, -1):
        m, n = map_timesteps(tmap, t)
        ms.append(m)
        ns.append(n)
    return ms, ns


# -- loss profile ----------------------------------------------------------
@dataclass
class LossProfile:
    bins: np.ndarray
    normalized_loss_v: np.ndarray
    normalized_loss_a: np.ndarray
    raw_loss_v: np.ndarray | None = None
    raw_loss_a: np.ndarray | None = None

    def curve_distance(self) -> float:
        """Mean absolute gap between the two normalized curves."""
        return float(np.mean(np.abs(self.normalized_loss_v - self.normalized_loss_a)))

    def to_csv(self, path) -> None:
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "loss_v", "loss_a"])
            for t, lv, la in zip(self.bins, self.normalized_loss_v, self.normalized_loss_a):
                w.writerow([int(t), repr(float(lv)), repr(float(la))])

    @classmethod
    def from_csv(cls, path) -> "LossProfile":
        with Path(path).open(newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["t", "loss_v", "loss_a"]:
            raise DataError(f"{path}: expected header t,loss_v,loss_a")
        body = np.array([[float(x) for x in r] for r in rows[1:]], dtype=np.float64).reshape(-1, 3)
        return cls(body[:, 0].astype(int), body[:, 1], body[:, 2])


def profile_bins(T: int, n_bins: int) -> np.ndarray:
    """``n_bins`` evenly spaced global steps from 1 to T inclusive."""
    if n_bins < 2:
        raise ContractError(f"n_bins must be >= 2, got {n_bins}")
    if n_bins > T:
        raise ContractError(f"n_bins ({n_bins}) exceeds the number of global steps ({T})")
    return np.unique(np.array([round_half_away(x) for x in np.linspace(1, T, n_bins)], dtype=int))


def profile_loss(model, dataset, tmap: TimestepMap, n_bins: int, samples_per_bin: int, rng) -> LossProfile:
    """Per-modality noise-prediction loss along the global timestep axis.

    For every bin the dataset pairs are noised at the mapped local steps (each
    clamped to at least 1), the joint model predicts both noises, and the
    mean-squared errors are averaged over ``samples_per_bin`` draws. Each
    curve is then divided by its value at the first (smallest) bin.
    """
    from .diffusion import q_sample_batch
    from .numerics import no_grad

    if samples_per_bin < 1:
        raise DataError(f"samples_per_bin must be >= 1, got {samples_per_bin}")
    if len(dataset) == 0:
        raise DataError("cannot profile loss on an empty dataset")
    bins = profile_bins(tmap.T, n_bins)
    xv_all, xa_all, labels_all = dataset.arrays()
    sv, sa = model.schedule_v, model.schedule_a
    raw_v, raw_a = [], []
    for b, t in enumerate(bins):
        m, n = map_timesteps(tmap, int(t))
        m, n = max(m, 1), max(n, 1)
        r = rng.child(b)
        idx = r.integers(0, len(dataset) - 1, size=samples_per_bin)
        x0_v, x0_a, labels = xv_all[idx], xa_all[idx], labels_all[idx]
        eps_v = r.normal(x0_v.shape)
        eps_a = r.normal(x0_a.shape)
        tv = np.full(samples_per_bin, m)
        ta = np.full(samples_per_bin, n)
        xt_v = q_sample_batch(x0_v, tv, eps_v, sv)
        xt_a = q_sample_batch(x0_a, ta, eps_a, sa)
        with no_grad():
            pv, pa = model.predict_noise(xt_v, xt_a, tv, ta, labels)
        raw_v.append(float(np.mean((pv.data.astype(np.float64) - eps_v) ** 2)))
        raw_a.append(float(np.mean((pa.data.astype(np.float64) - eps_a) ** 2)))
    raw_v, raw_a = np.array(raw_v), np.array(raw_a)
    return LossProfile(bins, raw_v / raw_v[0], raw_a / raw_a[0], raw_v, raw_a)
