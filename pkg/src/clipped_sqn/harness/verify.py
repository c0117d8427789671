"""Quick self-checks runnable from an installed package (no test files needed).

Each check draws randomized cases from a fixed seed and compares the fast
code paths against slower independent computations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .. import objectives
from ..objectives import Dataset, ObjectiveKind
from ..optimizer import CONSTANT, LINEAR, QUADRATIC, clipped_stepsize
from ..quasi_newton import DampingParams, LbfgsMemory, dense_hk_dim, two_loop_apply


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def random_memory(rng: np.random.Generator, d: int, p: int, params: DampingParams, adversarial: bool = False):
    """Fill a memory with ``p`` random pairs; ``adversarial`` flips curvature on half of them."""
    mem = LbfgsMemory.empty(params)
    for i in range(p):
        s = rng.standard_normal(d)
        y = rng.standard_normal(d)
        if adversarial and i % 2 == 0:
            y = -np.abs(s @ y) * s / (s @ s) + 0.1 * y
        mem.update(s, y, 1.0, params)
    return mem


def check_two_loop(cases: int = 200, seed: int = 0) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(cases):
        d, p = int(rng.integers(2, 21)), int(rng.integers(1, 6))
        params = DampingParams(delta=float(rng.uniform(0.1, 2.0)), q=float(rng.uniform(0.05, 0.9)), memory_size=p,
                               adaptive=False)
        mem = random_memory(rng, d, p, params)
        v = rng.standard_normal(d)
        fast = two_loop_apply(mem, v)
        dense = dense_hk_dim(mem, d) @ v
        worst = max(worst, float(np.linalg.norm(fast - dense) / np.linalg.norm(dense)))
    return CheckResult("two-loop matches dense inverse-Hessian product", worst <= 1e-10, f"max rel err {worst:.2e}")


def check_positive_definite(cases: int = 100, seed: int = 1) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = np.inf
    for _ in range(cases):
        d, p = int(rng.integers(2, 11)), int(rng.integers(1, 6))
        params = DampingParams(delta=0.5, q=0.3, memory_size=p, adaptive=False)
        mem = random_memory(rng, d, p, params, adversarial=True)
        worst = min(worst, float(np.linalg.eigvalsh(dense_hk_dim(mem, d)).min()))
    return CheckResult("damped memory stays positive definite", worst > 0, f"min eigenvalue {worst:.3e}")


def check_stepsize() -> CheckResult:
    table = [
        ((10.0, 1.0, 1.0, 1.0, 1.0, 0.1), (0.001, QUADRATIC)),
        ((0.1, 1.0, 1.0, 1.0, 1.0, 0.1), (0.5, CONSTANT)),
        ((10.0, 1.0, 1.0, 0.0, 1.0, 0.1), (0.01, LINEAR)),
    ]
    bad = []
    for args, (eta, branch) in table:
        got = clipped_stepsize(*args)
        if abs(got[0] - eta) > 1e-15 or got[1] != branch:
            bad.append(f"{args} -> {got}")
    return CheckResult("clipped stepsize worked cases", not bad, "; ".join(bad) or "3 cases exact")


def check_gradients(points: int = 20, seed: int = 2) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for kind, mode in ((ObjectiveKind.ROBUST_LINEAR_REGRESSION, "pm1"), (ObjectiveKind.NONCONVEX_LOGISTIC, "zero_one")):
        ds = objectives.generate_synthetic(8, 30, 0.5, mode, seed=int(rng.integers(1 << 30)))
        for _ in range(points):
            x = rng.uniform(-1, 1, ds.dimension)
            g = objectives.full_gradient(kind, x, ds)
            h = 1e-6
            fd = np.array([
                (objectives.full_loss(kind, x + h * e, ds) - objectives.full_loss(kind, x - h * e, ds)) / (2 * h)
                for e in np.eye(ds.dimension)
            ])
            worst = max(worst, float(np.linalg.norm(fd - g) / max(np.linalg.norm(g), 1e-12)))
    return CheckResult("gradients match central differences", worst <= 1e-6, f"max rel err {worst:.2e}")


def check_dataset_roundtrip(seed: int = 3) -> CheckResult:
    ds = objectives.generate_synthetic(12, 20, 0.25, "pm1", seed=seed)
    back = objectives.loads_dataset(objectives.dumps_dataset(ds))
    ok = isinstance(back, Dataset) and np.array_equal(back.features, ds.features) and np.array_equal(back.labels, ds.labels)
    return CheckResult("dataset text round trip", ok, "exact" if ok else "mismatch")


CHECKS = (check_two_loop, check_positive_definite, check_stepsize, check_gradients, check_dataset_roundtrip)


def run_checks() -> list[CheckResult]:
    return [check() for check in CHECKS]
