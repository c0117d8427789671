"""Clipped stochastic quasi-Newton driver.

Each iteration refreshes the variance-reduced gradient estimate ``v_k``,
picks a clipped stepsize from ``|v_k|``, updates the damped L-BFGS memory
with the curvature pair formed on the previous iteration's batch, and moves
along ``-H_k v_k``.
"""

from __future__ import annotations

import io
import csv
import math
import logging
from dataclasses import dataclass, field

import numpy as np

from . import objectives, spider
from .objectives import Dataset, ObjectiveKind, SmoothnessParams
from .quasi_newton import DampingParams, EigenBounds, LbfgsMemory, closed_form_bounds, compute_gamma, two_loop_apply
from .rng import stream

log = logging.getLogger(__name__)

CONSTANT = "constant"
LINEAR = "linear"
QUADRATIC = "quadratic"
BRANCHES = (CONSTANT, LINEAR, QUADRATIC)

#: iteration budgets above this are capped
MAX_ITERATION_BUDGET = 10**8


class ConfigError(ValueError):
    """Invalid or infeasible optimizer configuration."""


class DivergenceError(RuntimeError):
    def __init__(self, message: str, trace: "RunTrace"):
        super().__init__(message)
        self.trace = trace


# ---------------------------------------------------------------------------
# configuration


@dataclass
class ClippedSqnConfig:
    eps: float
    beta: float
    c_param: float
    smoothness: SmoothnessParams
    damping: DampingParams = field(default_factory=DampingParams)
    eigen: EigenBounds | None = None
    s1_size: int = 2000
    s2_size: int = 100
    restart_period: int = 20
    max_iterations: int = 1000
    max_samples: int | None = None
    seed: int = 0
    theory_batches: bool = False
    strict: bool = False
    replace: bool = True
    track_true_gradient: bool = False

    def __post_init__(self):
        if not self.eps > 0:
            raise ConfigError("eps must be positive")
        if not self.beta > 0 or not self.c_param > 0:
            raise ConfigError("beta and c_param must be positive")
        if self.max_iterations < 1:
            raise ConfigError("max_iterations must be positive")
        h1 = self.h1
        if not h1 > 0:
            b = self.bounds
            raise ConfigError(
                f"h1 = {h1:.6g} <= 0 (lambda_m={b.lambda_m:.6g}, lambda_M={b.lambda_M:.6g}, "
                f"beta={self.beta}, L1={self.smoothness.L1}, c={self.c_param}); "
                "the convergence guarantee requires h1 > 0"
            )
        if self.strict:
            check_theory_ranges(self)
        if self.theory_batches:
            self.s1_size, self.s2_size, self.restart_period = spider.theory_batch_sizes(
                self.eps, self.smoothness.sigma, h1
            )

    @property
    def bounds(self) -> EigenBounds:
        if self.eigen is not None:
            return self.eigen
        return closed_form_bounds(self.damping, self.smoothness.gamma0)

    @property
    def h1(self) -> float:
        return compute_h1(self.beta, self.c_param, self.smoothness.L1, self.bounds)


def compute_h1(beta: float, c_param: float, L1: float, eigen: EigenBounds) -> float:
    """``lambda_m - beta lambda_M^2 (2 + 3 L1 c) / 4``."""
    return eigen.lambda_m - beta * eigen.lambda_M**2 * (2.0 + 3.0 * L1 * c_param) / 4.0


def check_theory_ranges(cfg: ClippedSqnConfig) -> None:
    eig = cfg.bounds
    lm, lM = eig.lambda_m, eig.lambda_M
    beta_max = lm / (1.0 + lM**2)
    if cfg.beta > beta_max:
        raise ConfigError(f"beta = {cfg.beta} exceeds lambda_m / (1 + lambda_M^2) = {beta_max:.6g}")
    L1 = cfg.smoothness.L1
    if L1 > 0:
        b = cfg.beta
        c_max = (4.0 * lm - 2.0 * b * (1.0 + lM**2)) / (L1 * lM**2 * b * (3.0 + b**2))
        if cfg.c_param > c_max:
            raise ConfigError(f"c = {cfg.c_param} exceeds the admissible maximum {c_max:.6g}")


# ---------------------------------------------------------------------------
# stepsize and budget


def clipped_stepsize(v_norm: float, h1: float, L0: float, L1: float, lambda_M: float, eps: float) -> tuple[float, str]:
    """Three-term clipped stepsize and the branch that attains the minimum.

    Ties resolve to the earlier branch (constant, then linear, then quadratic).
    """
    scale = h1 / lambda_M**2
    eta = scale / (2.0 * L0)
    branch = CONSTANT
    if v_norm > 0.0:
        # divide in stages so a tiny norm overflows to inf rather than dividing by zero
        lin = scale * eps / L0 / v_norm
        if lin < eta:
            eta, branch = lin, LINEAR
        if L1 > 0.0:
            quad = scale * eps / L1 / v_norm / v_norm
            if quad < eta:
                eta, branch = quad, QUADRATIC
    return eta, branch


def compute_stepsize(v_norm: float, cfg: ClippedSqnConfig) -> tuple[float, str]:
    return clipped_stepsize(v_norm, cfg.h1, cfg.smoothness.L0, cfg.smoothness.L1, cfg.bounds.lambda_M, cfg.eps)


def iteration_budget(delta0: float, cfg: ClippedSqnConfig, hard_max: int = MAX_ITERATION_BUDGET) -> int:
    """``ceil(2 L0 lambda_M^2 Delta0 / (h1^2 eps^2))``, capped at ``hard_max``."""
    if not delta0 > 0:
        raise ValueError("delta0 must be positive")
    h1 = cfg.h1
    raw = 2.0 * cfg.smoothness.L0 * cfg.bounds.lambda_M**2 * delta0 / (h1**2 * cfg.eps**2)
    K = math.ceil(raw * (1.0 - 1e-12))
    if K > hard_max:
        log.warning("iteration budget %d capped at %d", K, hard_max)
        return hard_max
    return max(K, 1)


# ---------------------------------------------------------------------------
# traces


@dataclass
class IterationRecord:
    k: int
    loss: float
    grad_norm_v: float
    stepsize: float
    samples_consumed: int
    clip_branch: str = CONSTANT
    grad_norm_true: float | None = None


CSV_COLUMNS = ("k", "samples", "loss", "grad_norm", "stepsize", "clip_branch")


def _num(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


@dataclass
class RunTrace:
    records: list[IterationRecord] = field(default_factory=list)
    output_index: int = 0
    x_output: np.ndarray | None = None
    x_final: np.ndarray | None = None
    final_loss: float | None = None
    final_samples: int = 0
    aborted: str | None = None
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.records)

    def to_csv(self) -> str:
        """Per-iteration CSV; ``grad_norm`` is the true gradient norm when tracked, else |v_k|."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.records:
            g = r.grad_norm_true if r.grad_norm_true is not None else r.grad_norm_v
            w.writerow([_num(r.k), _num(r.samples_consumed), _num(r.loss), _num(g), _num(r.stepsize), r.clip_branch])
        return buf.getvalue()


class OutputSampler:
    """Uniform choice over a stream of iterates of unknown length (reservoir of one)."""

    def __init__(self, rng: np.random.Generator):
        self.rng = rng
        self.count = 0
        self.index = 0
        self.x = None

    def offer(self, x: np.ndarray) -> None:
        self.count += 1
        if self.count == 1 or self.rng.integers(0, self.count) == 0:
            self.index = self.count - 1
            self.x = x.copy()


# ---------------------------------------------------------------------------
# the method


@dataclass
class TrainState:
    x: np.ndarray
    spider: spider.SpiderState
    memory: LbfgsMemory
    k: int = 0
    x_prev: np.ndarray | None = None
    prev_batch: np.ndarray | None = None
    prev_grad: np.ndarray | None = None
    prev_gamma: float | None = None
    rng_s1: np.random.Generator | None = None
    rng_s2: np.random.Generator | None = None

    @classmethod
    def initial(cls, cfg: ClippedSqnConfig, x0) -> "TrainState":
        sp = spider.SpiderState(
            v=None,
            restart_period=cfg.restart_period,
            s1_size=cfg.s1_size,
            s2_size=cfg.s2_size,
            replace=cfg.replace,
        )
        return cls(
            x=np.array(x0, dtype=np.float64),
            spider=sp,
            memory=LbfgsMemory.empty(cfg.damping),
            rng_s1=stream(cfg.seed, "s1"),
            rng_s2=stream(cfg.seed, "s2"),
        )


def _batch_stats(kind, x, dataset, batch, smoothness: SmoothnessParams):
    """Mean gradient and Gamma on ``batch`` at ``x``."""
    if smoothness.gamma1 > 0.0:
        per = objectives.per_sample_gradients(kind, x, dataset, batch)
        return per.mean(axis=0), compute_gamma(per, smoothness)
    return objectives.gradient(kind, x, dataset, batch), compute_gamma(None, smoothness)


def step(state: TrainState, cfg: ClippedSqnConfig, dataset: Dataset, kind: ObjectiveKind) -> tuple[TrainState, IterationRecord]:
    """Advance one iteration in place and return the record for ``x_k``."""
    x = state.x
    loss = objectives.full_loss(kind, x, dataset)
    true_norm = None
    if cfg.track_true_gradient:
        true_norm = float(np.linalg.norm(objectives.full_gradient(kind, x, dataset)))

    _, draw = spider.update(state.spider, kind, x, state.x_prev, dataset, state.rng_s1, state.rng_s2)
    v = state.spider.v
    v_norm = float(np.linalg.norm(v))
    eta, branch = compute_stepsize(v_norm, cfg)

    # curvature pair from the batch drawn at k-1, evaluated at x_{k-1} and x_k
    if state.prev_batch is not None:
        s = x - state.x_prev
        y = objectives.gradient(kind, x, dataset, state.prev_batch) - state.prev_grad
        if state.memory.update(s, y, state.prev_gamma, cfg.damping) is None:
            log.debug("iteration %d: curvature pair rejected", state.k)

    direction = two_loop_apply(state.memory, v)

    if draw.kind == spider.RESTART and cfg.smoothness.gamma1 == 0.0:
        state.prev_grad = v.copy()
        state.prev_gamma = compute_gamma(None, cfg.smoothness)
    else:
        state.prev_grad, state.prev_gamma = _batch_stats(kind, x, dataset, draw.indices, cfg.smoothness)
    state.prev_batch = draw.indices

    record = IterationRecord(
        k=state.k,
        loss=loss,
        grad_norm_v=v_norm,
        stepsize=eta,
        samples_consumed=state.spider.samples_consumed,
        clip_branch=branch,
        grad_norm_true=true_norm,
    )
    state.x_prev = x
    state.x = x - eta * direction
    state.k += 1
    return state, record


def run(cfg: ClippedSqnConfig, dataset: Dataset, kind: ObjectiveKind, x0, raise_on_divergence: bool = False) -> RunTrace:
    """Run up to ``max_iterations`` steps or until ``max_samples`` are consumed.

    The returned output iterate is drawn uniformly from the visited
    ``x_0 .. x_{K-1}``.  A non-finite loss or iterate aborts the run; the
    partial trace is returned with ``aborted`` set (or raised inside a
    :class:`DivergenceError` when ``raise_on_divergence``).
    """
    state = TrainState.initial(cfg, x0)
    if state.x.shape != (dataset.dimension,):
        raise ConfigError(f"x0 has shape {state.x.shape}, expected ({dataset.dimension},)")
    sampler = OutputSampler(stream(cfg.seed, "output"))
    trace = RunTrace()
    while state.k < cfg.max_iterations:
        if cfg.max_samples is not None and state.spider.samples_consumed >= cfg.max_samples:
            break
        sampler.offer(state.x)
        state, rec = step(state, cfg, dataset, kind)
        trace.records.append(rec)
        if not (math.isfinite(rec.loss) and np.all(np.isfinite(state.x))):
            trace.aborted = f"non-finite value at iteration {rec.k}"
            break
    return _finish(trace, sampler, state.x, state.spider.samples_consumed, kind, dataset, raise_on_divergence,
                   diagnostics={"memory": state.memory.snapshot(), "restarts": state.spider.restarts,
                                "refreshes": state.spider.refreshes})


def _finish(trace, sampler, x_final, samples, kind, dataset, raise_on_divergence, diagnostics=None):
    trace.output_index = sampler.index
    trace.x_output = sampler.x
    trace.x_final = x_final
    trace.final_samples = int(samples)
    trace.diagnostics = diagnostics or {}
    if trace.aborted is None:
        trace.final_loss = objectives.full_loss(kind, x_final, dataset)
        if not math.isfinite(trace.final_loss):
            trace.aborted = "non-finite final loss"
    if trace.aborted is not None:
        log.error("run aborted: %s", trace.aborted)
        if raise_on_divergence:
            raise DivergenceError(trace.aborted, trace)
    return trace
