"""SPIDER-style recursive gradient estimator with periodic restarts.

On restart iterations (``k % r == 0``) the estimate is a fresh large-batch
gradient; otherwise it is corrected by the gradient difference between the
current and previous iterate on a small batch::

    v_k = v_{k-1} + grad l(x_k; S2) - grad l(x_{k-1}; S2)

The refresh batch is returned to the caller so that curvature pairs can be
formed later from the same samples without drawing new ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import objectives
from .objectives import Dataset, ObjectiveKind

#: hard cap on a single batch; beyond this the run is misconfigured
MAX_BATCH = 10_000_000

RESTART = "restart"
REFRESH = "refresh"


@dataclass
class BatchDraw:
    indices: np.ndarray
    kind: str


@dataclass
class SpiderState:
    v: np.ndarray | None
    restart_period: int
    s1_size: int
    s2_size: int
    iteration: int = 0
    samples_consumed: int = 0
    restarts: int = 0
    refreshes: int = 0
    replace: bool = True

    def __post_init__(self):
        for name in ("restart_period", "s1_size", "s2_size"):
            value = getattr(self, name)
            if int(value) != value or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if max(self.s1_size, self.s2_size) > MAX_BATCH:
            raise ValueError(f"batch size exceeds the cap of {MAX_BATCH}")

    @property
    def is_restart_step(self) -> bool:
        return self.iteration % self.restart_period == 0


def draw_batch(rng: np.random.Generator, n: int, size: int, replace: bool = True) -> np.ndarray:
    """Uniform index draw; without replacement ``size`` must not exceed ``n``."""
    if replace:
        return rng.integers(0, n, size=size)
    if size > n:
        raise ValueError(f"cannot draw {size} distinct samples from {n}")
    if size == n:
        return np.arange(n)
    return rng.choice(n, size=size, replace=False)


def restart(state: SpiderState, kind: ObjectiveKind, x, dataset: Dataset, rng: np.random.Generator):
    """Large-batch restart: ``v = grad l(x; S1)``."""
    if not state.is_restart_step:
        raise ValueError(f"iteration {state.iteration} is not a restart step")
    idx = draw_batch(rng, dataset.size, state.s1_size, state.replace)
    state.v = objectives.gradient(kind, x, dataset, idx)
    state.samples_consumed += state.s1_size
    state.restarts += 1
    state.iteration += 1
    return state, BatchDraw(idx, RESTART)


def refresh(state: SpiderState, kind: ObjectiveKind, x, x_prev, dataset: Dataset, rng: np.random.Generator):
    """Recursive correction on a fresh small batch drawn once."""
    if state.is_restart_step:
        raise ValueError(f"iteration {state.iteration} is a restart step")
    if x_prev is None or state.v is None:
        raise ValueError("refresh needs the previous iterate and estimate")
    idx = draw_batch(rng, dataset.size, state.s2_size, state.replace)
    correction = objectives.gradient(kind, x, dataset, idx) - objectives.gradient(kind, x_prev, dataset, idx)
    state.v = state.v + correction
    state.samples_consumed += state.s2_size
    state.refreshes += 1
    state.iteration += 1
    return state, BatchDraw(idx, REFRESH)


def update(state: SpiderState, kind: ObjectiveKind, x, x_prev, dataset: Dataset, rng_s1, rng_s2):
    """Dispatch to :func:`restart` or :func:`refresh` by iteration count."""
    if state.is_restart_step:
        return restart(state, kind, x, dataset, rng_s1)
    return refresh(state, kind, x, x_prev, dataset, rng_s2)


def _ceil(value: float) -> int:
    # absorb representation error so that e.g. 2 / 0.1**2 rounds up to 200, not 201
    return math.ceil(value * (1.0 - 1e-12))


def theory_batch_sizes(eps: float, sigma: float, h1: float) -> tuple[int, int, int]:
    """Batch sizes and restart period that make the estimator error O(eps^2).

    Returns ``(ceil(2 sigma^2 / eps^2), ceil(4 h1^2 / eps), ceil(1 / eps))``,
    each clamped to at least one.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if not h1 > 0:
        raise ValueError("h1 must be positive")
    if sigma < 0:
        raise ValueError("sigma must be nonnegative")
    s1 = max(1, _ceil(2.0 * sigma**2 / eps**2))
    s2 = max(1, _ceil(4.0 * h1**2 / eps))
    r = max(1, _ceil(1.0 / eps))
    return s1, s2, r


def expected_samples(iterations: int, s1_size: int, s2_size: int, restart_period: int) -> int:
    """Exact sample tally after ``iterations`` estimator updates."""
    restarts = -(-iterations // restart_period)
    return restarts * s1_size + (iterations - restarts) * s2_size
