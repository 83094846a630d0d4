"""Temporal-alignment scoring between audio onsets and video motion peaks.

Both event sets live on the video frame grid. A peak counts as matched when
the other set has an event within ``window`` frames (``|a - v| <= window``);
the default window of 1 is a three-frame window centred on the peak.

Empty-set convention: if either set is empty both AV-Align variants return 0,
so a generation with no detectable events never scores as aligned.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import ContractError, DataError, DimensionError

DEFAULT_WINDOW = 1
DEFAULT_RELATIVE_THRESHOLD = 0.5


@dataclass(frozen=True)
class PeakSet:
    times: tuple[int, ...]
    source: str

    def __post_init__(self):
        if self.source not in ("audio", "video"):
            raise ContractError(f"unknown peak source {self.source!r}")
        ts = tuple(int(t) for t in self.times)
        if any(t < 0 for t in ts) or any(b <= a for a, b in zip(ts, ts[1:])):
            raise ContractError(f"peak times must be non-negative and strictly increasing: {ts}")
        object.__setattr__(self, "times", ts)

    @classmethod
    def of(cls, times, source: str) -> "PeakSet":
        return cls(tuple(sorted(set(int(t) for t in times))), source)

    def __len__(self):
        return len(self.times)

    def __iter__(self):
        return iter(self.times)


@dataclass(frozen=True)
class AlignReport:
    p: float
    r: float
    score_modified: float
    score_official: float


def _local_maxima(signal: np.ndarray, threshold: float | None) -> list[int]:
    if signal.size == 0:
        return []
    peak = float(signal.max())
    if threshold is None:
        threshold = DEFAULT_RELATIVE_THRESHOLD * peak
    out = []
    n = len(signal)
    for i in range(n):
        s = signal[i]
        if s <= 0 or s <= threshold:
            continue
        left = signal[i - 1] if i > 0 else -np.inf
        right = signal[i + 1] if i + 1 < n else -np.inf
        if s > left and s >= right:
            out.append(i)
    return out


def onset_strength(x_a: np.ndarray) -> np.ndarray:
    """Positive temporal difference of the per-frame channel energy."""
    x = np.asarray(getattr(x_a, "data", x_a), dtype=np.float64)
    energy = np.sum(x * x, axis=-1)
    diff = np.zeros_like(energy)
    diff[1:] = np.maximum(energy[1:] - energy[:-1], 0.0)
    return diff


def motion_strength(x_v: np.ndarray) -> np.ndarray:
    """Frame-difference magnitude ||x[f] - x[f-1]||, a stand-in for optical-flow magnitude."""
    x = np.asarray(getattr(x_v, "data", x_v), dtype=np.float64)
    mag = np.zeros(x.shape[0])
    mag[1:] = np.linalg.norm(x[1:] - x[:-1], axis=-1)
    return mag


def detect_onsets(x_a, frames_per_video_frame: int, threshold: float | None = None) -> PeakSet:
    """Audio onsets mapped to the video grid by integer division.

    ``threshold`` is absolute; None means half the strongest onset.
    """
    if frames_per_video_frame < 1:
        raise ContractError("frames_per_video_frame must be >= 1")
    idx = _local_maxima(onset_strength(x_a), threshold)
    return PeakSet.of([i // frames_per_video_frame for i in idx], "audio")


def detect_motion_peaks(x_v, threshold: float | None = None) -> PeakSet:
    return PeakSet.of(_local_maxima(motion_strength(x_v), threshold), "video")


def _matched(src: Sequence[int], other: Sequence[int], window: int) -> int:
    return sum(1 for a in src if any(abs(a - v) <= window for v in other))


def av_align_official(A: PeakSet, V: PeakSet, window: int = DEFAULT_WINDOW) -> float:
    """c / (|A| + |V| - c) with c counted from the audio side only; can exceed 1."""
    if window < 0:
        raise ContractError("window must be >= 0")
    if not len(A) or not len(V):
        return 0.0
    c = _matched(A, V, window)
    return c / (len(A) + len(V) - c)


def av_align_modified(A: PeakSet, V: PeakSet, window: int = DEFAULT_WINDOW) -> AlignReport:
    """Precision/recall form of the IoU: pr / (p + r - pr), bounded in [0, 1]."""
    if window < 0:
        raise ContractError("window must be >= 0")
    official = av_align_official(A, V, window)
    if not len(A) or not len(V):
        return AlignReport(0.0, 0.0, 0.0, official)
    ma = _matched(A, V, window)
    mv = _matched(V, A, window)
    p = ma / len(A)
    r = mv / len(V)
    # pr/(p+r-pr) with p = ma/|A|, r = mv/|V|, cleared of denominators.
    den = ma * len(V) + mv * len(A) - ma * mv
    score = ma * mv / den if den else 0.0
    return AlignReport(p, r, score, official)


def score_pair(x_v, x_a, frames_per_video_frame: int, window: int = DEFAULT_WINDOW,
               threshold_v: float | None = None, threshold_a: float | None = None) -> AlignReport:
    A = detect_onsets(x_a, frames_per_video_frame, threshold_a)
    V = detect_motion_peaks(x_v, threshold_v)
    return av_align_modified(A, V, window)


def evaluate_pairs(pairs, frames_per_video_frame: int, window: int = DEFAULT_WINDOW) -> dict:
    """Per-pair alignment reports plus aggregate means, as a JSON-ready dict."""
    rows = []
    for x_v, x_a in pairs:
        rows.append(asdict(score_pair(x_v, x_a, frames_per_video_frame, window)))
    keys = ("p", "r", "score_modified", "score_official")
    agg = {k: (float(np.mean([row[k] for row in rows])) if rows else 0.0) for k in keys}
    return {"window": window, "count": len(rows), "pairs": rows, "mean": agg}


def write_report(path, report: dict) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True))


def moment_distance(samples_a, samples_b) -> float:
    """Frechet distance between diagonal-Gaussian fits of two sample sets.

    ||mu_a - mu_b||^2 + sum_i (sd_a,i - sd_b,i)^2 over flattened features.
    """
    if len(samples_a) == 0 or len(samples_b) == 0:
        raise DataError("moment_distance needs two non-empty sample sets")
    a = np.stack([np.asarray(getattr(s, "data", s), dtype=np.float64).reshape(-1) for s in samples_a])
    b = np.stack([np.asarray(getattr(s, "data", s), dtype=np.float64).reshape(-1) for s in samples_b])
    if a.shape[1] != b.shape[1]:
        raise DimensionError(f"feature sizes differ: {a.shape[1]} vs {b.shape[1]}")
    mu = a.mean(axis=0) - b.mean(axis=0)
    sd = a.std(axis=0) - b.std(axis=0)
    return float(math.fsum(mu * mu) + math.fsum(sd * sd))
