"""Central finite-difference gradient checks."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .rng import Rng
from .tensor import Tensor, backward, no_grad


def numeric_directional(fn: Callable[[], Tensor], params: Sequence[Tensor], directions: Sequence[np.ndarray], eps: float) -> float:
    """Central difference of ``fn`` along ``directions`` (one per parameter)."""
    originals = [p.data.copy() for p in params]
    with no_grad():
        for p, o, d in zip(params, originals, directions):
            p.data = (o + eps * d).astype(o.dtype)
        plus = float(np.asarray(fn().data, dtype=np.float64))
        for p, o, d in zip(params, originals, directions):
            p.data = (o - eps * d).astype(o.dtype)
        minus = float(np.asarray(fn().data, dtype=np.float64))
    for p, o in zip(params, originals):
        p.data = o
    return (plus - minus) / (2.0 * eps)


def analytic_directional(fn: Callable[[], Tensor], params: Sequence[Tensor], directions: Sequence[np.ndarray]) -> float:
    for p in params:
        p.grad = None
    backward(fn())
    total = 0.0
    for p, d in zip(params, directions):
        if p.grad is not None:
            total += float(np.sum(p.grad.astype(np.float64) * d))
    return total


def relative_error(a: float, b: float, floor: float = 1e-8) -> float:
    return abs(a - b) / max(abs(a), abs(b), floor)


def check_directional(fn, params, rng: Rng, eps: float = 1e-3, probes: int = 10) -> list[tuple[float, float, float]]:
    """Compare recorded and finite-difference derivatives along random unit directions.

    Returns a list of ``(analytic, numeric, relative_error)`` per probe.
    """
    results = []
    for _ in range(probes):
        dirs = [rng.normal(p.shape, dtype=np.float64) for p in params]
        norm = np.sqrt(sum(float(np.sum(d * d)) for d in dirs))
        dirs = [d / norm for d in dirs]
        a = analytic_directional(fn, params, dirs)
        n = numeric_directional(fn, params, dirs, eps)
        results.append((a, n, relative_error(a, n)))
    return results


def check_elementwise(fn, params, eps: float = 1e-3) -> float:
    """Worst relative error over every scalar entry of ``params`` (small tensors only)."""
    for p in params:
        p.grad = None
    backward(fn())
    analytic = [np.zeros(p.shape) if p.grad is None else p.grad.astype(np.float64) for p in params]
    worst = 0.0
    for p, ga in zip(params, analytic):
        for idx in np.ndindex(p.shape):
            d = np.zeros(p.shape)
            d[idx] = 1.0
            dirs = [d if q is p else np.zeros(q.shape) for q in params]
            gn = numeric_directional(fn, params, dirs, eps)
            worst = max(worst, relative_error(ga[idx], gn, floor=1e-6))
    return worst


def check_parameterwise(fn, named_params, rng: Rng, eps: float = 1e-3, probes: int = 10) -> list[tuple[str, float, float, float]]:
    """Like :func:`check_directional`, but each probe perturbs one randomly chosen parameter tensor.

    Useful for large models, where a direction spread over every parameter is
    nearly orthogonal to the gradient and the float32 difference quotient
    cannot resolve it. Returns ``(name, analytic, numeric, relative_error)``.
    """
    names = list(named_params)
    results = []
    for _ in range(probes):
        name = names[int(rng.integers(0, len(names) - 1))]
        p = named_params[name]
        d = rng.normal(p.shape, dtype=np.float64)
        d /= np.linalg.norm(d)
        a = analytic_directional(fn, [p], [d])
        n = numeric_directional(fn, [p], [d], eps)
        results.append((name, a, n, relative_error(a, n)))
    return results
