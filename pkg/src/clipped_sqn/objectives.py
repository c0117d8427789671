"""Finite-sum objectives, synthetic data and smoothness diagnostics.

The objectives are averages of per-sample losses ``l(x; (a_i, b_i))`` over an
index multiset (a mini-batch).  Three losses are supported:

* robust linear regression, ``log(t**2 / 2 + 1)`` with residual ``t = b - a.x``
* non-convex logistic regression (cross entropy with labels in {0, 1})
* sigmoid cross entropy ``b * log(sigmoid(a.x))`` used by the smoothness check
"""

from __future__ import annotations

import enum
import io
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence

import numpy as np

from .rng import stream


class ObjectiveKind(enum.Enum):
    ROBUST_LINEAR_REGRESSION = "robust_linear_regression"
    NONCONVEX_LOGISTIC = "nonconvex_logistic"
    SIGMOID_CROSS_ENTROPY = "sigmoid_cross_entropy"

    @classmethod
    def parse(cls, text: str) -> "ObjectiveKind":
        key = text.strip().lower().replace("-", "_")
        aliases = {"robust_lr": cls.ROBUST_LINEAR_REGRESSION, "logistic": cls.NONCONVEX_LOGISTIC}
        if key in aliases:
            return aliases[key]
        try:
            return cls(key)
        except ValueError:
            raise ValueError(f"unknown objective {text!r}") from None


@dataclass(frozen=True)
class Sample:
    features: np.ndarray
    label: float


@dataclass(eq=False)
class Dataset:
    """Dense ``(n, d)`` feature matrix with one label per row."""

    features: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.ascontiguousarray(self.labels, dtype=np.float64).reshape(-1)
        if self.features.ndim != 2:
            raise ValueError("features must be a 2-D array")
        if self.features.shape[0] != self.labels.shape[0]:
            raise ValueError("one label per sample is required")
        if self.features.shape[0] < 1 or self.features.shape[1] < 1:
            raise ValueError("dataset must have n >= 1 samples of dimension d >= 1")

    @property
    def size(self) -> int:
        return self.features.shape[0]

    @property
    def dimension(self) -> int:
        return self.features.shape[1]

    @property
    def samples(self) -> Iterator[Sample]:
        for a, b in zip(self.features, self.labels):
            yield Sample(a, float(b))

    def __len__(self) -> int:
        return self.size


@dataclass(frozen=True)
class SmoothnessParams:
    """Problem constants used by stepsizes and the adaptive damping.

    ``L0``/``L1`` enter the clipped stepsize; ``gamma0``/``gamma1``/``sigma``
    describe per-sample smoothness and gradient noise.
    """

    L0: float
    L1: float
    gamma0: float = 1.0
    gamma1: float = 0.0
    sigma: float = 0.0

    def __post_init__(self):
        if not self.L0 > 0:
            raise ValueError("L0 must be positive")
        if self.L1 < 0:
            raise ValueError("L1 must be nonnegative")
        if not self.gamma0 > 0:
            raise ValueError("gamma0 must be positive")
        if self.gamma1 < 0 or self.sigma < 0:
            raise ValueError("gamma1 and sigma must be nonnegative")

    @classmethod
    def from_gammas(cls, gamma0: float, gamma1: float, sigma: float) -> "SmoothnessParams":
        L0 = math.sqrt(2.0 * (gamma0**2 + gamma1**2 * sigma**2))
        return cls(L0=L0, L1=gamma1 * math.sqrt(2.0), gamma0=gamma0, gamma1=gamma1, sigma=sigma)

    @property
    def derived_L0(self) -> float:
        """L0 implied by (gamma0, gamma1, sigma)."""
        return math.sqrt(2.0 * (self.gamma0**2 + self.gamma1**2 * self.sigma**2))

    @property
    def derived_L1(self) -> float:
        return self.gamma1 * math.sqrt(2.0)

    def is_consistent(self) -> bool:
        return self.L0 == self.derived_L0 and self.L1 == self.derived_L1


# ---------------------------------------------------------------------------
# numerics


def sigmoid(z):
    """Logistic function, evaluated on the branch that cannot overflow."""
    z = np.asarray(z, dtype=np.float64)
    e = np.exp(-np.abs(z))
    return np.where(z >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


def _softplus(z):
    return np.logaddexp(0.0, z)


# ---------------------------------------------------------------------------
# synthetic data


def generate_synthetic(
    d: int,
    n: int,
    sparsity: float = 0.1,
    label_mode: str = "pm1",
    seed: int = 0,
    shared_u: bool = False,
) -> Dataset:
    """Sparse nonnegative features with sign labels.

    Each row has ``round(sparsity * d)`` nonzeros at uniformly chosen
    positions with values uniform on [0, 1].  The label is ``sign(u.a)`` with
    ``u`` uniform on [-1, 1]^d, drawn per sample unless ``shared_u``.  In
    ``zero_one`` mode labels are mapped to ``(sign + 1) / 2``.
    """
    if d < 1 or n < 1:
        raise ValueError("d and n must be positive")
    if not 0.0 < sparsity <= 1.0:
        raise ValueError("sparsity must lie in (0, 1]")
    if label_mode not in ("pm1", "zero_one"):
        raise ValueError(f"unknown label mode {label_mode!r}")
    nnz = int(round(sparsity * d))
    if nnz == 0:
        raise ValueError(f"sparsity {sparsity} leaves no nonzero entries at d={d}")

    rng = stream(seed, "data")
    features = np.zeros((n, d))
    # argsort of uniform keys gives a uniform subset per row without replacement
    positions = np.argsort(rng.random((n, d)), axis=1)[:, :nnz]
    values = rng.random((n, nnz))
    np.put_along_axis(features, positions, values, axis=1)

    if shared_u:
        u = rng.uniform(-1.0, 1.0, size=d)
        scores = features @ u
    else:
        u = rng.uniform(-1.0, 1.0, size=(n, d))
        scores = np.einsum("ij,ij->i", features, u)
    labels = np.where(scores >= 0.0, 1.0, -1.0)
    if label_mode == "zero_one":
        labels = (labels + 1.0) / 2.0
    return Dataset(features, labels)


# ---------------------------------------------------------------------------
# oracles


def _check(kind: ObjectiveKind, x: np.ndarray, dataset: Dataset, batch) -> tuple[np.ndarray, np.ndarray]:
    batch = np.asarray(batch, dtype=np.intp).reshape(-1)
    if batch.size == 0:
        raise ValueError("empty batch")
    if x.shape != (dataset.dimension,):
        raise ValueError(f"x has shape {x.shape}, expected ({dataset.dimension},)")
    if batch.min() < 0 or batch.max() >= dataset.size:
        raise IndexError("batch index out of range")
    b = dataset.labels[batch]
    if kind is ObjectiveKind.NONCONVEX_LOGISTIC and not np.all((b == 0.0) | (b == 1.0)):
        raise ValueError("logistic labels must lie in {0, 1}")
    return batch, b


def _per_sample_coefficients(kind: ObjectiveKind, z: np.ndarray, b: np.ndarray) -> np.ndarray:
    """d l / d z for the linear score ``z = a.x``."""
    if kind is ObjectiveKind.ROBUST_LINEAR_REGRESSION:
        t = b - z
        return -t / (0.5 * t * t + 1.0)
    if kind is ObjectiveKind.NONCONVEX_LOGISTIC:
        return sigmoid(z) - b
    if kind is ObjectiveKind.SIGMOID_CROSS_ENTROPY:
        return b * sigmoid(-z)
    raise ValueError(f"unsupported objective {kind}")


def per_sample_losses(kind: ObjectiveKind, x, dataset: Dataset, batch) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    batch, b = _check(kind, x, dataset, batch)
    z = dataset.features[batch] @ x
    if kind is ObjectiveKind.ROBUST_LINEAR_REGRESSION:
        t = b - z
        return np.log1p(0.5 * t * t)
    if kind is ObjectiveKind.NONCONVEX_LOGISTIC:
        return b * _softplus(-z) + (1.0 - b) * _softplus(z)
    if kind is ObjectiveKind.SIGMOID_CROSS_ENTROPY:
        return -b * _softplus(-z)
    raise ValueError(f"unsupported objective {kind}")


def loss(kind: ObjectiveKind, x, dataset: Dataset, batch) -> float:
    """Average per-sample loss over ``batch``."""
    return float(np.mean(per_sample_losses(kind, x, dataset, batch)))


def per_sample_gradients(kind: ObjectiveKind, x, dataset: Dataset, batch) -> np.ndarray:
    """Gradient of each batch member's loss, shape ``(len(batch), d)``."""
    x = np.asarray(x, dtype=np.float64)
    batch, b = _check(kind, x, dataset, batch)
    A = dataset.features[batch]
    coef = _per_sample_coefficients(kind, A @ x, b)
    return coef[:, None] * A


def gradient(kind: ObjectiveKind, x, dataset: Dataset, batch) -> np.ndarray:
    """Mini-batch gradient, the mean of the per-sample gradients."""
    x = np.asarray(x, dtype=np.float64)
    batch, b = _check(kind, x, dataset, batch)
    A = dataset.features[batch]
    coef = _per_sample_coefficients(kind, A @ x, b)
    return (coef @ A) / batch.size


def full_loss(kind: ObjectiveKind, x, dataset: Dataset) -> float:
    return loss(kind, x, dataset, np.arange(dataset.size))


def full_gradient(kind: ObjectiveKind, x, dataset: Dataset) -> np.ndarray:
    return gradient(kind, x, dataset, np.arange(dataset.size))


# ---------------------------------------------------------------------------
# smoothness diagnostics


@dataclass
class SmoothnessReport:
    ratios: list[float] = field(default_factory=list)
    bound: float = 0.0
    skipped: int = 0

    @property
    def max_ratio(self) -> float | None:
        return max(self.ratios) if self.ratios else None

    @property
    def empty(self) -> bool:
        return not self.ratios


def check_cross_entropy_smoothness(u, y: float, xs: Sequence) -> SmoothnessReport:
    """Ratio of Hessian norm to gradient norm for ``F(x) = y log sigmoid(u.x)``.

    The Hessian ``-y s (1 - s) u u^T`` is formed explicitly and its spectral
    norm taken; every ratio must be at most ``|u|``.  Probes with a zero
    gradient are skipped.
    """
    u = np.asarray(u, dtype=np.float64)
    unorm = float(np.linalg.norm(u))
    report = SmoothnessReport(bound=unorm)
    for x in xs:
        z = float(u @ np.asarray(x, dtype=np.float64))
        s = float(sigmoid(z))
        one_minus = float(sigmoid(-z))
        grad = y * one_minus * u
        gnorm = float(np.linalg.norm(grad))
        if gnorm == 0.0:
            report.skipped += 1
            continue
        hess = -y * s * one_minus * np.outer(u, u)
        ratio = float(np.linalg.norm(hess, 2)) / gnorm
        if ratio > unorm * (1.0 + 1e-12):
            raise AssertionError(f"smoothness ratio {ratio} exceeds |u| = {unorm}")
        report.ratios.append(ratio)
    return report


def local_smoothness(grad_fn: Callable[[np.ndarray], np.ndarray], xs: Sequence) -> list[tuple[float, float]]:
    """(|grad f(x_k)|, |grad f(x_{k+1}) - grad f(x_k)| / |x_{k+1} - x_k|) pairs."""
    if len(xs) < 2:
        raise ValueError("need at least two iterates")
    xs = [np.asarray(x, dtype=np.float64) for x in xs]
    grads = [grad_fn(x) for x in xs]
    out = []
    for k in range(len(xs) - 1):
        step = float(np.linalg.norm(xs[k + 1] - xs[k]))
        if step == 0.0:
            continue
        out.append((float(np.linalg.norm(grads[k])), float(np.linalg.norm(grads[k + 1] - grads[k])) / step))
    return out


def estimate_smoothness_along_trajectory(kind: ObjectiveKind, dataset: Dataset, xs: Sequence) -> list[tuple[float, float]]:
    return local_smoothness(lambda x: full_gradient(kind, x, dataset), xs)


# ---------------------------------------------------------------------------
# persistence


def _fmt(v: float) -> str:
    return f"{v:.16e}"


def _fmt_label(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else _fmt(v)


def dumps_dataset(dataset: Dataset) -> str:
    """Sparse text form: ``d n`` then ``label idx:val ...`` per sample."""
    buf = io.StringIO()
    buf.write(f"{dataset.dimension} {dataset.size}\n")
    for a, b in zip(dataset.features, dataset.labels):
        nz = np.flatnonzero(a)
        parts = [_fmt_label(b)] + [f"{j}:{_fmt(a[j])}" for j in nz]
        buf.write(" ".join(parts) + "\n")
    return buf.getvalue()


def loads_dataset(text: str) -> Dataset:
    lines = text.splitlines()
    if not lines:
        raise ValueError("empty dataset file")
    try:
        d, n = (int(t) for t in lines[0].split())
    except ValueError:
        raise ValueError("first line must be 'd n'") from None
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != n:
        raise ValueError(f"header declares {n} samples, found {len(body)}")
    features = np.zeros((n, d))
    labels = np.empty(n)
    for i, ln in enumerate(body):
        tokens = ln.split()
        labels[i] = float(tokens[0])
        for tok in tokens[1:]:
            j, v = tok.split(":")
            j = int(j)
            if not 0 <= j < d:
                raise ValueError(f"line {i + 2}: feature index {j} out of range")
            features[i, j] = float(v)
    return Dataset(features, labels)


def save_dataset(dataset: Dataset, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as fh:
        fh.write(dumps_dataset(dataset))


def load_dataset(path: str | os.PathLike) -> Dataset:
    with open(path, encoding="ascii") as fh:
        return loads_dataset(fh.read())
