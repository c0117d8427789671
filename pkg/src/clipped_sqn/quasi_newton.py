"""Adaptive damped L-BFGS.

Curvature pairs ``(s, y)`` are damped towards the initial matrix so that
``s.y_bar`` stays bounded away from zero, with weights that adapt to the
local smoothness proxy ``Gamma``:

    w = kappa^2 / Gamma^2,        q_k = q * Gamma^4

The product ``H_k v`` is computed with the two-loop recursion over the
stored damped pairs and initial matrix ``H_{k,0} = I / c_k``.  Dense
versions of both the L-BFGS recursion and the full adaptive BFGS update are
provided as test oracles only.
"""

from __future__ import annotations

import logging
import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .objectives import SmoothnessParams

log = logging.getLogger(__name__)

#: q_k is clamped below 1 by this margin when q * Gamma^4 >= 1
Q_CEILING = 1.0 - 1e-6
#: dense oracles refuse larger problems
DENSE_MAX_DIM = 64


@dataclass(frozen=True)
class DampingParams:
    """Design parameters of the damped L-BFGS memory.

    With ``adaptive=True`` the pair weight and damping threshold follow
    ``kappa^2 / Gamma^2`` and ``q Gamma^4``.  With ``adaptive=False`` they are
    the constants ``kappa^2`` and ``q`` (a plain stochastic damped L-BFGS).
    """

    delta: float = 1.0
    q: float = 0.5
    kappa: float = 1.0
    memory_size: int = 5
    adaptive: bool = True

    def __post_init__(self):
        if not (self.delta > 0 and self.q > 0 and self.kappa > 0):
            raise ValueError("delta, q and kappa must be positive")
        if int(self.memory_size) != self.memory_size or self.memory_size < 1:
            raise ValueError("memory_size must be a positive integer")
        if not self.adaptive and not self.q < 1:
            raise ValueError("a fixed q must lie in (0, 1)")

    def weights(self, gamma: float) -> tuple[float, float, bool]:
        """Return ``(w_k, q_k, clamped)`` for smoothness proxy ``gamma``."""
        if not self.adaptive:
            return self.kappa**2, self.q, False
        if not gamma > 0:
            raise ValueError("Gamma must be positive")
        w = self.kappa**2 / gamma**2
        q_k = self.q * gamma**4
        if q_k >= Q_CEILING:
            return w, Q_CEILING, True
        return w, q_k, False


@dataclass(frozen=True)
class EigenBounds:
    lambda_m: float
    lambda_M: float

    def __post_init__(self):
        if not 0 < self.lambda_m <= self.lambda_M:
            raise ValueError(f"need 0 < lambda_m <= lambda_M, got {self.lambda_m}, {self.lambda_M}")


@dataclass
class CurvaturePair:
    s: np.ndarray
    y: np.ndarray
    y_bar: np.ndarray
    rho: float
    gamma: float
    theta: float = 1.0
    weight: float = 1.0
    q_k: float = 0.5


@dataclass
class LbfgsMemory:
    """Ring of at most ``memory_size`` damped pairs plus the scaling ``c``."""

    memory_size: int
    c: float
    pairs: deque = field(default=None)
    clamped: int = 0
    rejected: int = 0

    def __post_init__(self):
        if self.memory_size < 1:
            raise ValueError("memory_size must be positive")
        if not self.c > 0:
            raise ValueError("c must be positive")
        self.pairs = deque(self.pairs or (), maxlen=self.memory_size)

    @classmethod
    def empty(cls, params: DampingParams) -> "LbfgsMemory":
        return cls(memory_size=params.memory_size, c=params.delta)

    def __len__(self) -> int:
        return len(self.pairs)

    def push(self, pair: CurvaturePair) -> None:
        self.pairs.append(pair)

    def update(self, s, y, gamma: float, params: DampingParams) -> CurvaturePair | None:
        """Form and store the damped pair for ``(s, y)``.

        The scaling ``c`` is recomputed from the raw pair first, then the pair
        is damped against ``c I``.  A zero or non-finite displacement leaves
        the memory untouched and returns ``None``.
        """
        s = np.asarray(s, dtype=np.float64)
        y = np.asarray(y, dtype=np.float64)
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(y))) or not np.any(s):
            self.rejected += 1
            return None
        c = compute_scaling(s, y, gamma, params)
        pair = damp_pair(s, y, c, gamma, params)
        self.c = c
        if params.adaptive and pair.q_k == Q_CEILING:
            self.clamped += 1
        self.push(pair)
        return pair

    def snapshot(self) -> dict:
        """Plain-data view for trace dumps."""
        return {
            "c": self.c,
            "pairs": [
                {"rho": p.rho, "gamma": p.gamma, "theta": p.theta, "weight": p.weight, "q_k": p.q_k}
                for p in self.pairs
            ],
            "clamped": self.clamped,
            "rejected": self.rejected,
        }


# ---------------------------------------------------------------------------
# pair construction


def compute_gamma(batch_gradients, params: SmoothnessParams) -> float:
    """Data-dependent smoothness proxy from per-sample gradients at x_{k-1}.

    ``gamma0 (1 + exp(gamma1 / L0) / L0) + gamma1^2 * mean |grad l|`` with
    ``L0 = sqrt(2 (gamma0^2 + gamma1^2 sigma^2))``.
    """
    g0, g1 = params.gamma0, params.gamma1
    L0 = params.derived_L0
    base = g0 * (1.0 + math.exp(g1 / L0) / L0)
    if g1 == 0.0:
        return base
    grads = np.asarray(batch_gradients, dtype=np.float64)
    if grads.ndim != 2 or grads.shape[0] == 0:
        raise ValueError("Gamma needs a non-empty batch of per-sample gradients when gamma1 > 0")
    return base + g1**2 * float(np.mean(np.linalg.norm(grads, axis=1)))


def compute_scaling(s, y, gamma: float, params: DampingParams) -> float:
    """``c_k = max(delta, w * y.y / s.y)``; nonpositive curvature gives ``delta``."""
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    sy = float(s @ y)
    if sy <= 0.0:
        return params.delta
    w, _, _ = params.weights(gamma)
    return max(params.delta, w * float(y @ y) / sy)


def damp_pair(s, y, c: float, gamma: float, params: DampingParams) -> CurvaturePair:
    """Blend ``y`` with ``c s`` so that ``s.y_bar >= w q_k c s.s``."""
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    ss = float(s @ s)
    if ss == 0.0:
        raise ValueError("zero displacement")
    w, q_k, _ = params.weights(gamma)
    return _damp(s, y, c, w, q_k, gamma)


def _damp(s, y, c, w, q_k, gamma) -> CurvaturePair:
    mu = c * float(s @ s)
    sy = float(s @ y)
    if sy >= q_k * mu:
        theta = 1.0
        y_bar = w * y
        sy_bar = w * sy
    else:
        theta = (1.0 - q_k) * mu / (mu - sy)
        # 1 - theta in closed form; subtracting theta from 1 loses digits when theta is near 1
        one_minus = (q_k * mu - sy) / (mu - sy)
        y_bar = w * (theta * y + one_minus * c * s)
        # exact value of s.y_bar on this branch; avoids cancellation in the dot product
        sy_bar = w * q_k * mu
    return CurvaturePair(s=s, y=y, y_bar=y_bar, rho=1.0 / sy_bar, gamma=gamma, theta=theta, weight=w, q_k=q_k)


# ---------------------------------------------------------------------------
# applying H_k


def two_loop_apply(memory: LbfgsMemory, v) -> np.ndarray:
    """Return ``H_k v`` in O(p d) without forming H_k."""
    u = np.array(v, dtype=np.float64)
    pairs = list(memory.pairs)
    alphas = []
    for pair in reversed(pairs):
        a = pair.rho * float(pair.s @ u)
        u -= a * pair.y_bar
        alphas.append(a)
    r = u / memory.c
    for pair, a in zip(pairs, reversed(alphas)):
        b = pair.rho * float(pair.y_bar @ r)
        r += (a - b) * pair.s
    return r


def dense_hk(memory: LbfgsMemory) -> np.ndarray:
    """Explicit L-BFGS inverse Hessian, oldest pair applied first."""
    if not memory.pairs:
        raise ValueError("dimension unknown for an empty memory; use dense_hk_dim")
    d = memory.pairs[0].s.shape[0]
    return dense_hk_dim(memory, d)


def dense_hk_dim(memory: LbfgsMemory, d: int) -> np.ndarray:
    if d > DENSE_MAX_DIM:
        raise ValueError(f"dense oracle limited to d <= {DENSE_MAX_DIM}")
    eye = np.eye(d)
    H = eye / memory.c
    for pair in memory.pairs:
        V = eye - pair.rho * np.outer(pair.y_bar, pair.s)
        H = V.T @ H @ V + pair.rho * np.outer(pair.s, pair.s)
    return H


@dataclass
class DenseBfgsState:
    """Full adaptive BFGS pair ``(B, H = B^-1)``."""

    B: np.ndarray
    H: np.ndarray
    q_hat: float | None = None
    w_hat: float | None = None
    theta: float | None = None

    @classmethod
    def identity(cls, d: int, scale: float = 1.0) -> "DenseBfgsState":
        return cls(B=scale * np.eye(d), H=np.eye(d) / scale)


def dense_bfgs_step(state: DenseBfgsState, s, y, q_hat: float, w_hat: float) -> DenseBfgsState:
    """One adaptive BFGS update of both B and H, damped against ``B s``."""
    if not 0.0 < q_hat < 1.0 or not w_hat > 0.0:
        raise ValueError("need 0 < q_hat < 1 and w_hat > 0")
    s = np.asarray(s, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    B, H = state.B, state.H
    d = s.shape[0]
    if d > DENSE_MAX_DIM:
        raise ValueError(f"dense oracle limited to d <= {DENSE_MAX_DIM}")
    Bs = B @ s
    mu = float(s @ Bs)
    if not mu > 0.0:
        raise ValueError("s^T B s must be positive; B is not positive definite or s = 0")
    sy = float(s @ y)
    theta = 1.0 if sy >= q_hat * mu else (1.0 - q_hat) * mu / (mu - sy)
    y_hat = w_hat * (theta * y + (1.0 - theta) * Bs)
    sy_hat = float(s @ y_hat)
    rho = 1.0 / sy_hat
    B_new = B - np.outer(Bs, Bs) / mu + np.outer(y_hat, y_hat) * rho
    V = np.eye(d) - rho * np.outer(y_hat, s)
    H_new = V.T @ H @ V + rho * np.outer(s, s)
    return DenseBfgsState(B=B_new, H=H_new, q_hat=q_hat, w_hat=w_hat, theta=theta)


# ---------------------------------------------------------------------------
# eigenvalue envelope


def lambda_m_bound(params: DampingParams, gamma0: float) -> float:
    """Guaranteed lower eigenvalue bound of H_k under adaptive (w, q)."""
    d, q, k2, p = params.delta, params.q, params.kappa**2, params.memory_size
    g = gamma0
    inner = 1.0 / d + (d * g + k2) / g**3 + (p + 2.0 * q * g**4) / (2.0 * p * g)
    return 1.0 / (d + k2 * p / (q * g**4) * inner)


def lambda_M_bound(params: DampingParams, gamma0: float, include_initial: bool = False) -> float:
    """Upper eigenvalue bound of H_k in closed form.

    The published form unrolls ``|H_{k,i}| <= a |H_{k,i-1}| + b`` from zero.
    ``include_initial=True`` keeps the ``a^p |H_{k,0}| <= a^p / delta`` term
    that the unrolling drops; only that variant is a valid bound in general.
    """
    d, q, k2, p = params.delta, params.q, params.kappa**2, params.memory_size
    g = gamma0
    t = 1.0 / (d * g * k2 * q)
    a = 1.0 + 2.0 * t + t * t
    bound = (a**p - 1.0) / (a - 1.0) / (d * g**2 * k2 * q)
    if include_initial:
        bound += a**p / d
    return bound


def closed_form_bounds(params: DampingParams, gamma0: float) -> EigenBounds:
    return EigenBounds(lambda_m_bound(params, gamma0), lambda_M_bound(params, gamma0))
