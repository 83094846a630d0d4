"""Synthetic paired video/audio latents with known event times.

Each event is a "hit": the video latent jumps at the event frame and relaxes
geometrically afterwards, while the audio latent is a quadrature carrier whose
amplitude follows an exponentially decaying envelope started at the matching
audio frame. Relaxation rate, decay rate, carrier frequency and channel signs
depend on the class label.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, FormatError, IncompatibleVersionError
from .numerics import Rng, derive_seed
from .serialization import read_i32, read_tensor, read_u32, write_i32, write_tensor, write_u32

N_LABELS = 3
VIDEO_RELAX = (0.25, 0.5, 0.75)
AUDIO_DECAY = (2.0, 4.0, 8.0)
AUDIO_FREQ = (0.5, 0.9, 1.3)
STD_GUARD = 1e-8

DATASET_MAGIC = b"JDDS"
DATASET_VERSION = 1


@dataclass(frozen=True)
class PairSpec:
    n_frames: int = 16
    video_dim: int = 8
    audio_frames: int = 64
    audio_dim: int = 4
    n_events: int = 3
    jitter: float = 0.0
    label: int = 0
    seed: int = 0
    min_gap: int = 3

    def __post_init__(self):
        for name in ("n_frames", "video_dim", "audio_frames", "audio_dim", "min_gap"):
            if int(getattr(self, name)) < 1:
                raise ConfigError(f"{name} must be >= 1", field=name)
        if self.audio_frames % self.n_frames:
            raise ConfigError("audio_frames must be an integer multiple of n_frames", field="audio_frames")
        if not 0 <= self.n_events <= self.n_frames:
            raise ConfigError("n_events must be in [0, n_frames]", field="n_events")
        if self.n_events and 1 + (self.n_events - 1) * self.min_gap > self.n_frames - 1:
            raise ConfigError(
                f"cannot place {self.n_events} events {self.min_gap} frames apart in {self.n_frames} frames",
                field="n_events",
            )
        if not self.jitter >= 0:
            raise ConfigError("jitter must be >= 0", field="jitter")
        if not 0 <= self.label < N_LABELS:
            raise ConfigError(f"label must be in [0, {N_LABELS})", field="label")

    @property
    def ratio(self) -> int:
        return self.audio_frames // self.n_frames


@dataclass
class Pair:
    x_v: np.ndarray
    x_a: np.ndarray
    label: int
    event_times: list[int] = field(default_factory=list)


def _channel_signs(label: int, dim: int) -> np.ndarray:
    d = np.arange(dim)
    pattern = np.cos(np.pi * (label + 1) * (d + 0.5) / dim)
    return np.where(pattern >= 0, 1.0, -1.0) * (0.5 + 0.5 * np.abs(pattern))


def _carrier(label: int, frames: int, dim: int) -> np.ndarray:
    """[frames, dim] cos/sin pairs at harmonics of the label's frequency."""
    j = np.arange(frames)[:, None]
    d = np.arange(dim)[None, :]
    phase = AUDIO_FREQ[label] * (d // 2 + 1) * j + 0.3 * (d // 2)
    return np.where(d % 2 == 0, np.cos(phase), np.sin(phase))


def _standardize(x: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=0, keepdims=True)
    sd = x.std(axis=0, keepdims=True)
    return (x - mu) / np.where(sd < STD_GUARD, 1.0, sd)


def sample_event_frames(rng: Rng, n_frames: int, n_events: int, min_gap: int) -> list[int]:
    """Sorted frames in [1, n_frames-1], pairwise at least ``min_gap`` apart, uniformly."""
    if n_events == 0:
        return []
    slack = (n_events - 1) * (min_gap - 1)
    pool = n_frames - 1 - slack
    picks = np.sort(rng.choice(pool, n_events, replace=False)) + 1
    return [int(p + i * (min_gap - 1)) for i, p in enumerate(picks)]


def make_pair(spec: PairSpec) -> Pair:
    rng = Rng(spec.seed)
    events = sample_event_frames(rng, spec.n_frames, spec.n_events, spec.min_gap)
    r = spec.ratio

    f = np.arange(spec.n_frames)
    rho = VIDEO_RELAX[spec.label]
    y = np.zeros(spec.n_frames)
    for e in events:
        after = f >= e
        y[after] += rho ** (f[after] - e)
    x_v = y[:, None] * _channel_signs(spec.label, spec.video_dim)[None, :]

    j = np.arange(spec.audio_frames)
    kappa = AUDIO_DECAY[spec.label]
    env = np.zeros(spec.audio_frames)
    for e in events:
        shift = int(np.rint(rng.uniform(-spec.jitter, spec.jitter) * r)) if spec.jitter > 0 else 0
        onset = min(max(e * r + shift, 0), spec.audio_frames - 1)
        after = j >= onset
        env[after] += np.exp(-(j[after] - onset) / kappa)
    x_a = env[:, None] * _carrier(spec.label, spec.audio_frames, spec.audio_dim)

    return Pair(
        _standardize(x_v).astype(np.float32),
        _standardize(x_a).astype(np.float32),
        spec.label,
        events,
    )


class Dataset:
    """In-memory collection of pairs plus the template they were drawn from."""

    def __init__(self, pairs: list[Pair], meta: dict | None = None):
        self.pairs = pairs
        self.meta = dict(meta or {})
        self._cache = None

    def __len__(self):
        return len(self.pairs)

    def __getitem__(self, i) -> Pair:
        return self.pairs[i]

    def arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Stacked (x_v [N,F,Dv], x_a [N,tau,Da], labels [N])."""
        if self._cache is None:
            if not self.pairs:
                raise DataError("dataset is empty")
            self._cache = (
                np.stack([p.x_v for p in self.pairs]),
                np.stack([p.x_a for p in self.pairs]),
                np.array([p.label for p in self.pairs], dtype=np.int64),
            )
        return self._cache

    def save(self, path) -> None:
        write_dataset(path, self)


def generate_dataset(template: PairSpec, n_samples: int) -> Dataset:
    """Pairs with per-sample derived seeds; labels cycle through the classes."""
    if n_samples < 0:
        raise ConfigError("n_samples must be >= 0", field="n_samples")
    pairs = []
    for i in range(n_samples):
        spec = replace(template, seed=derive_seed(template.seed, i), label=i % N_LABELS)
        pairs.append(make_pair(spec))
    return Dataset(pairs, {"spec": asdict(template)})


def make_dataset(template: PairSpec, n_samples: int, path) -> Dataset:
    ds = generate_dataset(template, n_samples)
    write_dataset(path, ds)
    return ds


def write_dataset(path, ds: Dataset) -> None:
    path = Path(path)
    header = {
        "count": len(ds),
        "video_shape": list(ds.pairs[0].x_v.shape) if ds.pairs else None,
        "audio_shape": list(ds.pairs[0].x_a.shape) if ds.pairs else None,
        "n_labels": N_LABELS,
        **ds.meta,
    }
    try:
        with path.open("wb") as fh:
            fh.write(DATASET_MAGIC)
            write_u32(fh, DATASET_VERSION)
            fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
            for p in ds.pairs:
                write_i32(fh, int(p.label))
                write_u32(fh, len(p.event_times))
                for t in p.event_times:
                    write_i32(fh, int(t))
                write_tensor(fh, "x_v", p.x_v)
                write_tensor(fh, "x_a", p.x_a)
    except OSError as exc:
        raise OSError(f"cannot write dataset to {path}: {exc}") from exc


def read_dataset(path) -> Dataset:
    path = Path(path)
    try:
        fh = path.open("rb")
    except OSError as exc:
        raise OSError(f"cannot read dataset {path}: {exc}") from exc
    with fh:
        if fh.read(4) != DATASET_MAGIC:
            raise FormatError(f"{path}: not a dataset file")
        version = read_u32(fh)
        if version != DATASET_VERSION:
            raise IncompatibleVersionError(f"{path}: dataset version {version}, expected {DATASET_VERSION}")
        header = json.loads(fh.readline().decode("utf-8"))
        pairs = []
        for _ in range(header["count"]):
            label = read_i32(fh)
            events = [read_i32(fh) for _ in range(read_u32(fh))]
            _, x_v = read_tensor(fh)
            _, x_a = read_tensor(fh)
            pairs.append(Pair(x_v, x_a, label, events))
    meta = {k: v for k, v in header.items() if k not in ("count", "video_shape", "audio_shape", "n_labels")}
    return Dataset(pairs, meta)
