"""Experiment configuration: INI-style text with one section per algorithm.

A minimal file only needs the objective::

    [experiment]
    objective = robust_lr

Everything else falls back to the desk-scale defaults below.  Unknown
sections or keys are rejected with the offending ``section.key`` path, and
every algorithm setting is validated at load time by building the run
configuration it describes.
"""

from __future__ import annotations

import configparser
import dataclasses
import io
import math
import os
from dataclasses import dataclass, field
from typing import Any, Callable

from ..baselines import Algorithm, BaselineConfig
from ..objectives import ObjectiveKind, SmoothnessParams
from ..optimizer import ClippedSqnConfig, check_theory_ranges
from ..optimizer import ConfigError as _OptimizerConfigError
from ..quasi_newton import DampingParams, EigenBounds

CLIPPED_SQN = "clipped_sqn"
ALGORITHMS = (CLIPPED_SQN,) + tuple(a.value for a in Algorithm)
DEFAULT_ROSTER = (CLIPPED_SQN, "sgd", "spider", "l0l1_spider", "sdlbfgs")

#: the parameter a ``grid`` key sweeps for each algorithm
STEP_KEY = {CLIPPED_SQN: "L0", "sgd": "lr", "spider": "L", "l0l1_spider": "L0", "sdlbfgs": "lr"}

DISPLAY_NAMES = {
    CLIPPED_SQN: "ClippedSQN",
    "sgd": "SGD",
    "spider": "Spider",
    "l0l1_spider": "(L0,L1)-Spider",
    "sdlbfgs": "SdLBFGS",
}

# kappa equal to the constant Gamma = 1 + 1/sqrt(2) of gamma0=1, gamma1=0 makes w_k = 1
_KAPPA = 1.0 + 1.0 / math.sqrt(2.0)


class ConfigError(_OptimizerConfigError):
    """Configuration problem tied to a ``section.key`` path."""

    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


# ---------------------------------------------------------------------------
# value codecs


def _parse_bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _parse_int(text: str) -> int:
    value = float(text)
    if value != int(value):
        raise ValueError(f"not an integer: {text!r}")
    return int(value)


def _parse_opt_float(text: str) -> float | None:
    if text.strip().lower() in ("", "none"):
        return None
    return float(text)


def _parse_opt_int(text: str) -> int | None:
    if text.strip().lower() in ("", "none"):
        return None
    return _parse_int(text)


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(t) for t in text.replace(";", ",").split(",") if t.strip())


def _parse_ints(text: str) -> tuple[int, ...]:
    return tuple(_parse_int(t) for t in text.replace(";", ",").split(",") if t.strip())


def _parse_names(text: str) -> tuple[str, ...]:
    return tuple(t.strip().lower().replace("-", "_") for t in text.split(",") if t.strip())


def _fmt(value: Any) -> str:
    if value is None:
        return "none"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple):
        return ", ".join(_fmt(v) for v in value)
    return str(value)


# ---------------------------------------------------------------------------
# schemas: key -> (parser, default)

_REQUIRED = object()

EXPERIMENT_KEYS: dict[str, tuple[Callable, Any]] = {
    "objective": (str, _REQUIRED),
    "seeds": (_parse_ints, (0, 1, 2, 3, 4)),
    "roster": (_parse_names, DEFAULT_ROSTER),
    "max_samples": (_parse_opt_int, 100_000),
    "max_iterations": (_parse_int, 10_000_000),
    "output_dir": (str, "results"),
    "comparison": (_parse_bool, True),
    "strict_theory": (_parse_bool, False),
    "theory_batches": (_parse_bool, False),
}

DATA_KEYS: dict[str, tuple[Callable, Any]] = {
    "source": (str, "generate"),
    "path": (str, ""),
    "n": (_parse_int, 5000),
    "d": (_parse_int, 100),
    "sparsity": (float, 0.1),
    "seed": (_parse_int, 1),
    "labels": (str, "auto"),
    "init": (str, "auto"),
}

_SPIDER_SIZES = {
    "s1_size": (_parse_int, 2000),
    "s2_size": (_parse_int, 100),
    "restart_period": (_parse_int, 10),
}

ALGORITHM_KEYS: dict[str, dict[str, tuple[Callable, Any]]] = {
    CLIPPED_SQN: {
        "eps": (float, 0.1),
        "beta": (float, 1e-6),
        "c": (float, 1.0),
        "L0": (float, 4.0),
        "L1": (float, 1.0),
        "gamma0": (float, 1.0),
        "gamma1": (float, 0.0),
        "sigma": (float, 0.0),
        "delta": (float, 1.0),
        "q": (float, 0.1 / _KAPPA**4),
        "kappa": (float, _KAPPA),
        "memory_size": (_parse_int, 5),
        "lambda_m": (_parse_opt_float, 1.0),
        "lambda_M": (_parse_opt_float, 1.0),
        **_SPIDER_SIZES,
        "grid": (_parse_floats, (1.0, 2.0, 4.0, 8.0)),
    },
    "sgd": {
        "batch_size": (_parse_int, 500),
        "lr": (float, 0.1),
        "grid": (_parse_floats, (1e-3, 1e-2, 1e-1, 1.0)),
    },
    "spider": {
        "L": (float, 0.3),
        "eps": (float, 0.1),
        **_SPIDER_SIZES,
        "grid": (_parse_floats, (0.1, 0.3, 1.0, 3.0)),
    },
    "l0l1_spider": {
        "L0": (float, 0.3),
        "L1": (float, 1.0),
        "eps": (float, 0.1),
        **_SPIDER_SIZES,
        "grid": (_parse_floats, (0.1, 0.3, 1.0, 3.0)),
    },
    "sdlbfgs": {
        "batch_size": (_parse_int, 500),
        "lr": (float, 0.3),
        "delta": (float, 0.01),
        "q": (float, 0.25),
        "memory_size": (_parse_int, 5),
        "grid": (_parse_floats, (0.03, 0.1, 0.3, 1.0)),
    },
}


# ---------------------------------------------------------------------------
# configuration objects


@dataclass(frozen=True)
class DataSpec:
    source: str = "generate"
    path: str = ""
    n: int = 5000
    d: int = 100
    sparsity: float = 0.1
    seed: int = 1
    labels: str = "auto"
    init: str = "auto"


@dataclass(frozen=True)
class AlgorithmSpec:
    """One roster entry; ``params`` holds every resolved key except ``grid``."""

    name: str
    params: dict = field(default_factory=dict)
    grid: tuple[float, ...] = ()

    @property
    def display_name(self) -> str:
        return DISPLAY_NAMES[self.name]

    @property
    def step_key(self) -> str:
        return STEP_KEY[self.name]

    def with_step(self, value: float) -> "AlgorithmSpec":
        params = dict(self.params)
        params[self.step_key] = float(value)
        return AlgorithmSpec(self.name, params, self.grid)


@dataclass(frozen=True)
class ExperimentConfig:
    objective: ObjectiveKind
    data: DataSpec = field(default_factory=DataSpec)
    roster: tuple[AlgorithmSpec, ...] = ()
    seeds: tuple[int, ...] = (0, 1, 2, 3, 4)
    max_samples: int | None = 100_000
    max_iterations: int = 10_000_000
    output_dir: str = "results"
    comparison: bool = True
    strict_theory: bool = False
    theory_batches: bool = False

    @property
    def label_mode(self) -> str:
        if self.data.labels != "auto":
            return self.data.labels
        return "pm1" if self.objective is ObjectiveKind.ROBUST_LINEAR_REGRESSION else "zero_one"

    @property
    def init_mode(self) -> str:
        if self.data.init != "auto":
            return self.data.init
        return "normal" if self.objective is ObjectiveKind.ROBUST_LINEAR_REGRESSION else "uniform"

    def replace(self, **changes) -> "ExperimentConfig":
        cfg = dataclasses.replace(self, **changes)
        validate(cfg)
        return cfg


def default_algorithm(name: str) -> AlgorithmSpec:
    schema = ALGORITHM_KEYS[name]
    params = {k: v for k, (_, v) in schema.items() if k != "grid"}
    return AlgorithmSpec(name, params, schema["grid"][1])


def default_config(objective: ObjectiveKind | str = ObjectiveKind.ROBUST_LINEAR_REGRESSION) -> ExperimentConfig:
    if isinstance(objective, str):
        objective = ObjectiveKind.parse(objective)
    cfg = ExperimentConfig(objective=objective, roster=tuple(default_algorithm(n) for n in DEFAULT_ROSTER))
    validate(cfg)
    return cfg


# ---------------------------------------------------------------------------
# building run configurations


def build_sqn(
    spec: AlgorithmSpec,
    seed: int,
    max_samples: int | None,
    max_iterations: int,
    theory_batches: bool = False,
) -> ClippedSqnConfig:
    p = spec.params
    smoothness = SmoothnessParams(L0=p["L0"], L1=p["L1"], gamma0=p["gamma0"], gamma1=p["gamma1"], sigma=p["sigma"])
    damping = DampingParams(delta=p["delta"], q=p["q"], kappa=p["kappa"], memory_size=p["memory_size"])
    lm, lM = p["lambda_m"], p["lambda_M"]
    if (lm is None) != (lM is None):
        raise ConfigError(f"{spec.name}.lambda_m", "lambda_m and lambda_M must both be set or both be none")
    eigen = None if lm is None else EigenBounds(lm, lM)
    return ClippedSqnConfig(
        eps=p["eps"],
        beta=p["beta"],
        c_param=p["c"],
        smoothness=smoothness,
        damping=damping,
        eigen=eigen,
        s1_size=p["s1_size"],
        s2_size=p["s2_size"],
        restart_period=p["restart_period"],
        max_iterations=max_iterations,
        max_samples=max_samples,
        seed=seed,
        theory_batches=theory_batches,
    )


def build_baseline(spec: AlgorithmSpec, seed: int, max_samples: int | None, max_iterations: int) -> BaselineConfig:
    return BaselineConfig(
        algorithm=Algorithm(spec.name),
        max_iterations=max_iterations,
        max_samples=max_samples,
        seed=seed,
        **spec.params,
    )


def build_run_config(cfg: ExperimentConfig, spec: AlgorithmSpec, seed: int):
    if spec.name == CLIPPED_SQN:
        run_cfg = build_sqn(spec, seed, cfg.max_samples, cfg.max_iterations, theory_batches=cfg.theory_batches)
        if cfg.strict_theory:
            _strict_check(spec, run_cfg)
        return run_cfg
    return build_baseline(spec, seed, cfg.max_samples, cfg.max_iterations)


def _strict_check(spec: AlgorithmSpec, run_cfg: ClippedSqnConfig) -> None:
    try:
        check_theory_ranges(run_cfg)
    except _OptimizerConfigError as exc:
        key = "beta" if str(exc).startswith("beta") else "c"
        raise ConfigError(f"{spec.name}.{key}", str(exc)) from None


# ---------------------------------------------------------------------------
# validation


def validate(cfg: ExperimentConfig) -> None:
    """Check every invariant eagerly; raise :class:`ConfigError` on the first failure."""
    if not cfg.roster:
        raise ConfigError("experiment.roster", "at least one algorithm is required")
    names = [a.name for a in cfg.roster]
    if len(set(names)) != len(names):
        raise ConfigError("experiment.roster", f"duplicate algorithm in {names}")
    if not cfg.seeds:
        raise ConfigError("experiment.seeds", "at least one seed is required")
    if len(set(cfg.seeds)) != len(cfg.seeds):
        raise ConfigError("experiment.seeds", f"seeds must be distinct, got {list(cfg.seeds)}")
    if any(s < 0 for s in cfg.seeds):
        raise ConfigError("experiment.seeds", "seeds must be nonnegative")
    if cfg.max_iterations < 1:
        raise ConfigError("experiment.max_iterations", "must be positive")
    if cfg.max_samples is not None and cfg.max_samples < 1:
        raise ConfigError("experiment.max_samples", "must be positive")
    if cfg.comparison and cfg.max_samples is None:
        raise ConfigError("experiment.max_samples", "comparison mode needs a common sample budget")

    d = cfg.data
    if d.source not in ("generate", "file"):
        raise ConfigError("data.source", f"expected generate or file, got {d.source!r}")
    if d.source == "file" and not d.path:
        raise ConfigError("data.path", "required when source = file")
    if d.n < 1 or d.d < 1:
        raise ConfigError("data.n" if d.n < 1 else "data.d", "must be positive")
    if not 0.0 < d.sparsity <= 1.0:
        raise ConfigError("data.sparsity", "must lie in (0, 1]")
    if d.labels not in ("auto", "pm1", "zero_one"):
        raise ConfigError("data.labels", f"expected auto, pm1 or zero_one, got {d.labels!r}")
    if d.init not in ("auto", "normal", "uniform"):
        raise ConfigError("data.init", f"expected auto, normal or uniform, got {d.init!r}")

    for spec in cfg.roster:
        if spec.name not in ALGORITHM_KEYS:
            raise ConfigError("experiment.roster", f"unknown algorithm {spec.name!r}")
        if any(not (v > 0 and math.isfinite(v)) for v in spec.grid):
            raise ConfigError(f"{spec.name}.grid", "grid values must be positive and finite")
        for candidate in (spec, *(spec.with_step(v) for v in spec.grid)):
            try:
                build_run_config(cfg, candidate, cfg.seeds[0])
            except ConfigError:
                raise
            except (ValueError, TypeError) as exc:
                raise ConfigError(spec.name, str(exc)) from None


# ---------------------------------------------------------------------------
# parsing and serialization


def _read_section(parser, section: str, schema: dict) -> dict:
    values = {}
    present = dict(parser.items(section)) if parser.has_section(section) else {}
    for key in present:
        if key not in schema:
            raise ConfigError(f"{section}.{key}", "unknown key")
    for key, (parse, default) in schema.items():
        if key in present:
            try:
                values[key] = parse(present[key])
            except ValueError as exc:
                raise ConfigError(f"{section}.{key}", str(exc)) from None
        elif default is _REQUIRED:
            raise ConfigError(f"{section}.{key}", "missing required field")
        else:
            values[key] = default
    return values


def parse_config(text: str) -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    parser.optionxform = str  # keep lambda_m and lambda_M distinct
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", f"malformed config: {exc}") from None

    known = {"experiment", "data", *ALGORITHM_KEYS}
    for section in parser.sections():
        if section not in known:
            raise ConfigError(section, "unknown section")
    if not parser.has_section("experiment"):
        raise ConfigError("experiment", "missing required section")

    exp = _read_section(parser, "experiment", EXPERIMENT_KEYS)
    try:
        objective = ObjectiveKind.parse(exp.pop("objective"))
    except ValueError as exc:
        raise ConfigError("experiment.objective", str(exc)) from None
    roster_names = exp.pop("roster")
    for name in roster_names:
        if name not in ALGORITHM_KEYS:
            raise ConfigError("experiment.roster", f"unknown algorithm {name!r}")

    roster = []
    for name in roster_names:
        values = _read_section(parser, name, ALGORITHM_KEYS[name])
        grid = values.pop("grid")
        roster.append(AlgorithmSpec(name, values, grid))
    data = DataSpec(**_read_section(parser, "data", DATA_KEYS))
    cfg = ExperimentConfig(objective=objective, data=data, roster=tuple(roster), **exp)
    validate(cfg)
    return cfg


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(cfg: ExperimentConfig) -> str:
    """Text form with every resolved value; parses back to an equal config."""
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    parser["experiment"] = {
        "objective": cfg.objective.value,
        "seeds": _fmt(tuple(cfg.seeds)),
        "roster": ", ".join(a.name for a in cfg.roster),
        "max_samples": _fmt(cfg.max_samples),
        "max_iterations": _fmt(cfg.max_iterations),
        "output_dir": cfg.output_dir,
        "comparison": _fmt(cfg.comparison),
        "strict_theory": _fmt(cfg.strict_theory),
        "theory_batches": _fmt(cfg.theory_batches),
    }
    parser["data"] = {f.name: _fmt(getattr(cfg.data, f.name)) for f in dataclasses.fields(DataSpec)}
    for spec in cfg.roster:
        section = {k: _fmt(spec.params[k]) for k in ALGORITHM_KEYS[spec.name] if k != "grid"}
        section["grid"] = _fmt(tuple(spec.grid))
        parser[spec.name] = section
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()
