"""Comparison methods: mini-batch SGD, Spider, (L0, L1)-Spider and SdLBFGS.

All baselines produce the same :class:`~clipped_sqn.optimizer.RunTrace` as
the main method and count samples the same way, so runs can be compared at
equal sample budgets.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from . import objectives, spider
from .objectives import Dataset, ObjectiveKind
from .optimizer import CONSTANT, LINEAR, IterationRecord, OutputSampler, RunTrace, _finish, clipped_stepsize
from .quasi_newton import DampingParams, LbfgsMemory, two_loop_apply
from .rng import stream


class Algorithm(enum.Enum):
    SGD = "sgd"
    SPIDER = "spider"
    L0L1_SPIDER = "l0l1_spider"
    SDLBFGS = "sdlbfgs"

    @classmethod
    def parse(cls, text: str) -> "Algorithm":
        key = text.strip().lower().replace("-", "_").replace("(", "").replace(")", "").replace(",", "")
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown baseline {text!r}") from None


@dataclass
class BaselineConfig:
    """Settings for one baseline; only the fields of ``algorithm`` are used.

    SGD: ``batch_size``, ``lr``.  Spider: ``s1_size``, ``s2_size``,
    ``restart_period``, ``L``, ``eps``.  (L0, L1)-Spider: as Spider with
    ``L0``, ``L1`` instead of ``L``.  SdLBFGS: ``batch_size``, ``lr`` (the
    initial stepsize of ``lr / sqrt(1 + k)``), ``delta``, ``q``,
    ``memory_size``.
    """

    algorithm: Algorithm
    batch_size: int = 500
    lr: float | None = None
    s1_size: int = 2000
    s2_size: int = 100
    restart_period: int = 20
    L: float | None = None
    L0: float | None = None
    L1: float | None = None
    eps: float | None = None
    delta: float = 1.0
    q: float = 0.25
    memory_size: int = 5
    max_iterations: int = 1000
    max_samples: int | None = None
    seed: int = 0

    def __post_init__(self):
        if isinstance(self.algorithm, str):
            self.algorithm = Algorithm.parse(self.algorithm)
        required = {
            Algorithm.SGD: ("lr",),
            Algorithm.SPIDER: ("L", "eps"),
            Algorithm.L0L1_SPIDER: ("L0", "L1", "eps"),
            Algorithm.SDLBFGS: ("lr",),
        }[self.algorithm]
        missing = [name for name in required if getattr(self, name) is None]
        if missing:
            raise ValueError(f"{self.algorithm.value} requires {', '.join(missing)}")
        if self.batch_size < 1 or self.max_iterations < 1:
            raise ValueError("batch_size and max_iterations must be positive")

    @property
    def damping(self) -> DampingParams:
        return DampingParams(delta=self.delta, q=self.q, kappa=1.0, memory_size=self.memory_size, adaptive=False)


# ---------------------------------------------------------------------------
# stepsizes


def spider_stepsize(v_norm: float, L: float, eps: float) -> tuple[float, str]:
    """``min(1 / (2L), eps / (L |v|))``."""
    eta = 1.0 / (2.0 * L)
    if v_norm > 0.0:
        lin = eps / (L * v_norm)
        if lin < eta:
            return lin, LINEAR
    return eta, CONSTANT


def l0l1_spider_stepsize(v_norm: float, L0: float, L1: float, eps: float) -> tuple[float, str]:
    """``min(1 / (2 L0), eps / (L0 |v|), eps / (L1 |v|^2))``."""
    return clipped_stepsize(v_norm, 1.0, L0, L1, 1.0, eps)


# ---------------------------------------------------------------------------
# single steps


def sgd_step(x, dataset: Dataset, kind: ObjectiveKind, cfg: BaselineConfig, rng) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(x - lr * grad l(x; B), grad l(x; B))``."""
    idx = spider.draw_batch(rng, dataset.size, cfg.batch_size)
    g = objectives.gradient(kind, x, dataset, idx)
    return x - cfg.lr * g, g


def spider_step(state: spider.SpiderState, x, x_prev, dataset, kind, cfg: BaselineConfig, rng_s1, rng_s2):
    spider.update(state, kind, x, x_prev, dataset, rng_s1, rng_s2)
    eta, branch = spider_stepsize(float(np.linalg.norm(state.v)), cfg.L, cfg.eps)
    return state, x - eta * state.v, eta, branch


def l0l1_spider_step(state: spider.SpiderState, x, x_prev, dataset, kind, cfg: BaselineConfig, rng_s1, rng_s2):
    spider.update(state, kind, x, x_prev, dataset, rng_s1, rng_s2)
    eta, branch = l0l1_spider_stepsize(float(np.linalg.norm(state.v)), cfg.L0, cfg.L1, cfg.eps)
    return state, x - eta * state.v, eta, branch


@dataclass
class SdLbfgsState:
    memory: LbfgsMemory
    k: int = 0
    x_prev: np.ndarray | None = None
    prev_batch: np.ndarray | None = None
    prev_grad: np.ndarray | None = None
    samples_consumed: int = 0


def sdlbfgs_step(x, state: SdLbfgsState, dataset, kind, cfg: BaselineConfig, rng):
    """Damped stochastic L-BFGS step ``x - lr / sqrt(1 + k) H_k g_k``.

    The pair is formed on the previous batch (evaluated at the previous and
    current iterate) with fixed weight 1 and damping threshold ``q``.
    """
    idx = spider.draw_batch(rng, dataset.size, cfg.batch_size)
    g = objectives.gradient(kind, x, dataset, idx)
    state.samples_consumed += cfg.batch_size
    if state.prev_batch is not None:
        s = x - state.x_prev
        y = objectives.gradient(kind, x, dataset, state.prev_batch) - state.prev_grad
        state.memory.update(s, y, 1.0, cfg.damping)
    eta = cfg.lr / math.sqrt(1.0 + state.k)
    step = two_loop_apply(state.memory, g)
    state.prev_batch, state.prev_grad, state.x_prev = idx, g, x
    state.k += 1
    return x - eta * step, state, eta, g


# ---------------------------------------------------------------------------
# full runs


def run_baseline(cfg: BaselineConfig, dataset: Dataset, kind: ObjectiveKind, x0) -> RunTrace:
    x = np.array(x0, dtype=np.float64)
    sampler = OutputSampler(stream(cfg.seed, "output"))
    trace = RunTrace()
    algo = cfg.algorithm

    if algo in (Algorithm.SPIDER, Algorithm.L0L1_SPIDER):
        sp = spider.SpiderState(v=None, restart_period=cfg.restart_period, s1_size=cfg.s1_size, s2_size=cfg.s2_size)
        rng_s1, rng_s2 = stream(cfg.seed, "s1"), stream(cfg.seed, "s2")
        step_fn = spider_step if algo is Algorithm.SPIDER else l0l1_spider_step
        x_prev = None
    elif algo is Algorithm.SDLBFGS:
        sd = SdLbfgsState(memory=LbfgsMemory.empty(cfg.damping))
    rng = stream(cfg.seed, "batch")

    samples = 0
    for k in range(cfg.max_iterations):
        if cfg.max_samples is not None and samples >= cfg.max_samples:
            break
        sampler.offer(x)
        loss = objectives.full_loss(kind, x, dataset)
        if algo is Algorithm.SGD:
            x_new, g = sgd_step(x, dataset, kind, cfg, rng)
            samples += cfg.batch_size
            eta, branch, vnorm = cfg.lr, CONSTANT, float(np.linalg.norm(g))
        elif algo is Algorithm.SDLBFGS:
            x_new, sd, eta, g = sdlbfgs_step(x, sd, dataset, kind, cfg, rng)
            samples = sd.samples_consumed
            branch, vnorm = CONSTANT, float(np.linalg.norm(g))
        else:
            sp, x_new, eta, branch = step_fn(sp, x, x_prev, dataset, kind, cfg, rng_s1, rng_s2)
            samples = sp.samples_consumed
            vnorm = float(np.linalg.norm(sp.v))
            x_prev = x
        trace.records.append(IterationRecord(k, loss, vnorm, eta, samples, branch))
        x = x_new
        if not (np.isfinite(loss) and np.all(np.isfinite(x))):
            trace.aborted = f"non-finite value at iteration {k}"
            break
    return _finish(trace, sampler, x, samples, kind, dataset, raise_on_divergence=False)

