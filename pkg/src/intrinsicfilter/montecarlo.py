"""Monte Carlo oracles: SDE simulation, first-variation coupling, kernel
regression conditional moments, variance-reduced weak-contract estimators,
and order-of-convergence fitting.

Randomness is counter-based: paths are processed in fixed-size blocks and
block j of a run with seed s draws from Philox(key=[s, j]).  Reductions are
performed in block order, so results are bitwise reproducible regardless of
how blocks are scheduled.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import charts as _charts

Array = np.ndarray

DEFAULT_BLOCK = 1 << 14


@dataclass(frozen=True)
class SimulationConfig:
    """Knobs for Monte Carlo runs."""

    n_paths: int
    steps: int = 512
    seed: int = 0
    gamma_ladder: tuple = (0.2, 0.1, 0.05)
    bandwidth_scale: float = 1.0
    block_size: int = DEFAULT_BLOCK


@dataclass
class OrderFit:
    slope: float
    intercept: float
    r2: float
    slope_se: float


def order_fit(gammas: Sequence[float], errors: Sequence[float], weights: Optional[Sequence[float]] = None) -> OrderFit:
    """Least-squares fit of log(error) against log(gamma).

    weights, when given, multiply the squared residuals in log space (use
    1/relative-error^2 style weights for error-bar-aware fits).
    """
    g = np.asarray(gammas, dtype=float)
    e = np.asarray(errors, dtype=float)
    if g.size < 3:
        raise ValueError("order fit needs at least 3 ladder points")
    if np.any(e <= 0.0):
        raise ValueError("order fit requires strictly positive errors")
    x = np.log(g)
    y = np.log(e)
    w = np.ones_like(x) if weights is None else np.asarray(weights, dtype=float)
    W = np.sum(w)
    xbar = np.sum(w * x) / W
    ybar = np.sum(w * y) / W
    sxx = np.sum(w * (x - xbar) ** 2)
    sxy = np.sum(w * (x - xbar) * (y - ybar))
    slope = sxy / sxx
    intercept = ybar - slope * xbar
    resid = y - (intercept + slope * x)
    syy = np.sum(w * (y - ybar) ** 2)
    r2 = 1.0 - np.sum(w * resid**2) / syy if syy > 0 else 1.0
    dof = max(g.size - 2, 1)
    var_slope = np.sum(w * resid**2) / dof / sxx
    return OrderFit(float(slope), float(intercept), float(r2), float(np.sqrt(var_slope)))


def block_rngs(seed: int, n_total: int, block_size: int = DEFAULT_BLOCK):
    """Yield (offset, count, Generator) triples with per-block Philox streams."""
    j = 0
    done = 0
    while done < n_total:
        count = min(block_size, n_total - done)
        key = np.array([np.uint64(seed), np.uint64(j)], dtype=np.uint64)
        yield done, count, np.random.Generator(np.random.Philox(key=key))
        done += count
        j += 1


def blocked_mean(seed: int, n_total: int, fn: Callable[[int, np.random.Generator], Array], block_size: int = DEFAULT_BLOCK):
    """Mean and standard error of a per-sample statistic computed block-wise.

    fn(count, rng) must return an array of shape (count, d).  Block partial
    sums are combined in block order, so the result does not depend on
    scheduling.  Returns (mean, standard_error, n_total).
    """
    total = None
    total_sq = None
    for _, count, rng in block_rngs(seed, n_total, block_size):
        vals = np.asarray(fn(count, rng), dtype=float)
        s = vals.sum(axis=0)
        s2 = (vals * vals).sum(axis=0)
        total = s if total is None else total + s
        total_sq = s2 if total_sq is None else total_sq + s2
    mean = total / n_total
    var = np.maximum(total_sq / n_total - mean**2, 0.0)
    se = np.sqrt(var / n_total)
    return mean, se, n_total
